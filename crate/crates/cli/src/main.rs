use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpinn_cli::commands::{self, Model};
use cpinn_cli::{CliError, ExperimentConfig};
use cpinn_core::ProblemKind;

/// Coupled physics-informed networks: source discovery and soft sensing
/// for 1-D heat and wave problems.
///
/// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
/// divergence. `CPINN_THREADS` caps the worker threads.
#[derive(Parser, Debug)]
#[command(name = "cpinn", version, about)]
struct Args {
    /// TOML experiment config; unset keys take the problem preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Problem preset, overriding `problem.kind`.
    #[arg(long, global = true, value_parser = parse_kind)]
    kind: Option<ProblemKind>,

    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<String>,

    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw the training dataset and the evaluation grid manifest.
    Generate {
        /// Also write synthetic sensor series under `sensors/`.
        #[arg(long)]
        sensors: bool,
    },
    /// Hierarchical training of the solution and source networks.
    Train {
        #[arg(long)]
        max_outer_iters: Option<usize>,
    },
    /// Train the tapped solution network from the CPINN checkpoints.
    TrainRp {
        /// Sensor manifest directory, overriding `rp.sensor_dir`.
        #[arg(long)]
        sensors: Option<PathBuf>,
    },
    /// Snapshot and full-domain metrics plus the prediction surface.
    Eval {
        #[arg(long, value_enum, default_value_t = Model::Cpinn)]
        model: Model,
        /// Sensor manifest directory for `--model rp`.
        #[arg(long)]
        sensors: Option<PathBuf>,
    },
    /// Masked-sensor soft sensing on ingested or synthetic series.
    SoftSensor {
        /// Sensor manifest directory; synthetic series when absent.
        #[arg(long)]
        sensors: Option<PathBuf>,
        /// 1-based sensor to withhold, overriding `soft_sensor.masked`.
        #[arg(long, conflicts_with = "no_mask")]
        mask: Option<usize>,
        /// Withhold no sensor.
        #[arg(long)]
        no_mask: bool,
    },
    /// Per-checkpoint diagnostics of a training run.
    Report,
}

fn parse_kind(s: &str) -> Result<ProblemKind, String> {
    match s {
        "heat" => Ok(ProblemKind::Heat1D),
        "wave" => Ok(ProblemKind::Wave1D),
        _ => Err(format!("unknown problem kind {s:?}; expected heat or wave")),
    }
}

fn setup_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CPINN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CPINN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn run(args: Args) -> Result<(), CliError> {
    setup_threads()?;
    let mut sets = args.sets.clone();
    if let Some(dir) = &args.out_dir {
        sets.push(format!("out_dir={}", toml_string(dir)));
    }
    match &args.command {
        Command::Train { max_outer_iters: Some(n) } => sets.push(format!("train.max_outer_iters={n}")),
        Command::TrainRp { sensors: Some(dir) } | Command::Eval { sensors: Some(dir), .. } => {
            sets.push(format!("rp.sensor_dir={}", toml_string(&dir.to_string_lossy())))
        }
        _ => {}
    }
    let cfg = ExperimentConfig::load(args.config.as_deref(), args.kind, &sets)?;
    match args.command {
        Command::Generate { sensors } => commands::generate(&cfg, sensors),
        Command::Train { .. } => commands::train(&cfg),
        Command::TrainRp { .. } => commands::train_rp(&cfg),
        Command::Eval { model, .. } => commands::eval(&cfg, model).map(drop),
        Command::SoftSensor { sensors, mask, no_mask } => {
            let masked = if no_mask {
                None
            } else {
                match mask {
                    Some(m) => Some(m),
                    None if cfg.soft_sensor.masked == 0 => None,
                    None => Some(cfg.soft_sensor.masked),
                }
            };
            commands::soft_sensor(&cfg, sensors.as_deref(), masked).map(drop)
        }
        Command::Report => commands::report(&cfg).map(drop),
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
