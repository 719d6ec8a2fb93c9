//! One function per subcommand. Every command reads and writes inside the
//! configured output directory and first echoes the resolved config there.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cpinn_core::autodiff::forward_many;
use cpinn_core::cpinn::{diagnostics, TrainStatus};
use cpinn_core::metrics::{evaluate, grid_eval, write_eval_csv, EvalResult};
use cpinn_core::rp::{
    masked_sensor_experiment, predict_points, read_sensor_dir, soft_sensor_run, synthetic_series, train_netu_rp,
    write_sensor_dir, SoftSensorConfig, SoftSensorOutcome,
};
use cpinn_core::sampling::{fmt_f64, linspace, make_grid, sample};
use cpinn_core::{hierarchical_train, spearman, Data, Grid, Mlp, Problem, Rp, Sensor, TapSource};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const DATA_DIR: &str = "data";
pub const GRID_FILE: &str = "grid.csv";
pub const SENSOR_DIR: &str = "sensors";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const NET_U_FILE: &str = "net_u.bin";
pub const NET_G_FILE: &str = "net_g.bin";
pub const NET_U_RP_FILE: &str = "net_u_rp.bin";
pub const RECORDS_FILE: &str = "train_records.csv";
pub const RP_HISTORY_FILE: &str = "rp_history.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SURFACE_FILE: &str = "surface.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "report_summary.csv";
pub const SOFT_SENSOR_FILE: &str = "soft_sensor.csv";

type Result<T> = std::result::Result<T, CliError>;

/// Which solution model `eval` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Model {
    /// The trained solution network.
    Cpinn,
    /// The tapped network.
    Rp,
    /// The closed-form solution itself.
    Exact,
}

fn echo_config(cfg: &ExperimentConfig, command: &str) -> Result<PathBuf> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("output directory {}: {e}", out.display())))?;
    fs::write(out.join(format!("{command}.resolved.toml")), cfg.to_toml())
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", out.display())))?;
    Ok(out)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("missing {what} {}; run the producing command first", path.display())))
    }
}

fn load_net(path: &Path, what: &str) -> Result<Mlp> {
    require(path, what)?;
    Ok(Mlp::load(path)?)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_grid_manifest(path: &Path, grid: &Grid, problem: &Problem) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "nx,nt,length,horizon")?;
    writeln!(w, "{},{},{},{}", grid.nx, grid.nt, fmt_f64(problem.length), fmt_f64(problem.horizon))?;
    w.flush()?;
    Ok(())
}

/// Draws the training dataset and writes it with the evaluation grid
/// manifest; optionally also writes synthetic sensor series.
pub fn generate(cfg: &ExperimentConfig, with_sensors: bool) -> Result<()> {
    let out = echo_config(cfg, "generate")?;
    let problem = cfg.problem()?;
    let data = sample(&problem, &cfg.sampling_config(), cfg.sampling.seed)?;
    let dir = out.join(DATA_DIR);
    data.save_dir(&dir)?;
    let grid = make_grid(&problem, cfg.eval.nx, cfg.eval.nt)?;
    write_grid_manifest(&dir.join(GRID_FILE), &grid, &problem)?;
    if with_sensors {
        let series = synthetic_series(
            &problem,
            &sensor_locations(&problem, cfg.soft_sensor.sensors),
            cfg.soft_sensor.sample_rate,
        )?;
        write_sensor_dir(&out.join(SENSOR_DIR), &series)?;
    }
    eprintln!(
        "generate: {} boundary/initial rows, {} interior labels, {} collocation points -> {}",
        data.d_b.len(),
        data.d_i.len(),
        data.extra_collocation.len(),
        dir.display()
    );
    Ok(())
}

fn load_dataset(out: &Path) -> Result<Data> {
    let dir = out.join(DATA_DIR);
    require(&dir, "dataset directory")?;
    Data::load_dir(&dir).map_err(|e| CliError::Data(e.to_string()))
}

fn checkpoint_path(out: &Path, k: usize, net: &str) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("k{k:04}_{net}.bin"))
}

/// Hierarchical training from the generated dataset.
pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let out = echo_config(cfg, "train")?;
    let problem = cfg.problem()?;
    let data = load_dataset(&out)?;
    let started = std::time::Instant::now();
    let outcome = hierarchical_train(&problem, &data, &cfg.net_u, &cfg.net_g, &cfg.train)?;
    let ckdir = out.join(CHECKPOINT_DIR);
    if ckdir.exists() {
        fs::remove_dir_all(&ckdir)?;
    }
    fs::create_dir_all(&ckdir)?;
    for (k, cp) in outcome.report.checkpoints.iter().enumerate() {
        cp.net_u.save(checkpoint_path(&out, k, "u"))?;
        cp.net_g.save(checkpoint_path(&out, k, "g"))?;
    }
    outcome.net_u.save(out.join(NET_U_FILE))?;
    outcome.net_g.save(out.join(NET_G_FILE))?;
    outcome.report.save_records(&out.join(RECORDS_FILE))?;
    let last = outcome.report.final_loss();
    eprintln!(
        "train: {} outer iterations, status {}, total loss {:.6e} (data {:.6e}, physics {:.6e}), {:.1}s",
        outcome.report.records.len(),
        outcome.report.status.as_str(),
        last.total,
        last.mse_dn,
        last.mse_pn,
        started.elapsed().as_secs_f64()
    );
    if outcome.report.status == TrainStatus::Diverged {
        return Err(CliError::Diverged(format!(
            "training hit a non-finite loss after {} outer iterations; last finite networks saved",
            outcome.report.records.len()
        )));
    }
    Ok(())
}

/// `m` equispaced interior locations `i·L/(m+1)`.
pub fn sensor_locations(problem: &Problem, m: usize) -> Vec<f64> {
    (1..=m).map(|i| i as f64 * problem.length / (m + 1) as f64).collect()
}

fn load_sensors(cfg: &ExperimentConfig) -> Result<Vec<Sensor>> {
    if cfg.rp.sensor_dir.is_empty() {
        return Ok(Vec::new());
    }
    let dir = PathBuf::from(&cfg.rp.sensor_dir);
    require(&dir.join("manifest.csv"), "sensor manifest")?;
    Ok(read_sensor_dir(&dir)?)
}

/// Taps at the sensors when there are any, else equispaced fallback taps.
fn rp_config(cfg: &ExperimentConfig, problem: &Problem, sensors: &[Sensor]) -> Result<Rp> {
    let mut rp = if sensors.is_empty() {
        let delay = if cfg.rp.delay > 0.0 { cfg.rp.delay } else { problem.horizon / 100.0 };
        Rp::equispaced(problem, cfg.rp.taps, delay)
    } else {
        if cfg.rp.masked > sensors.len() {
            return Err(CliError::Config(format!(
                "masked sensor {} out of range for {} sensors",
                cfg.rp.masked,
                sensors.len()
            )));
        }
        let delay = if cfg.rp.delay > 0.0 { cfg.rp.delay } else { sensors[0].dt };
        let mut rp = Rp::fallback_only(sensors.iter().map(|s| s.x).collect(), delay);
        for (i, a) in rp.availability.iter_mut().enumerate() {
            if i + 1 != cfg.rp.masked {
                *a = TapSource::HardSensor;
            }
        }
        rp
    };
    rp.depth = cfg.rp.depth;
    rp.validate(problem)?;
    Ok(rp)
}

/// Trains the tapped network from the CPINN checkpoints.
pub fn train_rp(cfg: &ExperimentConfig) -> Result<()> {
    let out = echo_config(cfg, "train-rp")?;
    let problem = cfg.problem()?;
    let net_u = load_net(&out.join(NET_U_FILE), "solution network checkpoint")?;
    let net_g = load_net(&out.join(NET_G_FILE), "source network checkpoint")?;
    let data = load_dataset(&out)?;
    let sensors = load_sensors(cfg)?;
    let rp = rp_config(cfg, &problem, &sensors)?;
    let outcome = train_netu_rp(&net_u, &net_g, &data, &problem, &rp, &sensors, &cfg.rp.train)?;
    outcome.net.save(out.join(NET_U_RP_FILE))?;
    let mut w = create(&out.join(RP_HISTORY_FILE))?;
    writeln!(w, "iter,loss")?;
    for (i, v) in outcome.history.iter().enumerate() {
        writeln!(w, "{i},{}", fmt_f64(*v))?;
    }
    w.flush()?;
    eprintln!(
        "train-rp: {} taps, loss {:.6e} -> {:.6e} ({:?})",
        rp.num_taps(),
        outcome.initial_loss,
        outcome.final_loss,
        outcome.status
    );
    Ok(())
}

type Predictor<'a> = Box<dyn Fn(&[[f64; 2]]) -> Result<Vec<f64>> + 'a>;

/// Snapshot and full-domain metrics plus the prediction surface.
pub fn eval(cfg: &ExperimentConfig, model: Model) -> Result<Vec<EvalResult<f64>>> {
    let out = echo_config(cfg, "eval")?;
    let problem = cfg.problem()?;
    let grid = make_grid(&problem, cfg.eval.nx, cfg.eval.nt)?;
    let exact = |x: f64, t: f64| problem.exact_u(x, t);
    // a boxed predictor keeps the three models on one code path
    let predictor: Predictor<'_> = match model {
        Model::Exact => Box::new(|pts: &[[f64; 2]]| {
            pts.iter().map(|&[x, t]| problem.exact_u(x, t).map_err(CliError::from)).collect()
        }),
        Model::Cpinn => {
            let net = load_net(&out.join(NET_U_FILE), "solution network checkpoint")?;
            Box::new(move |pts: &[[f64; 2]]| Ok(forward_many(&net, pts)?))
        }
        Model::Rp => {
            let net_u = load_net(&out.join(NET_U_FILE), "solution network checkpoint")?;
            let net_rp = load_net(&out.join(NET_U_RP_FILE), "tapped network checkpoint")?;
            let sensors = load_sensors(cfg)?;
            let rp = rp_config(cfg, &problem, &sensors)?;
            let problem = problem.clone();
            Box::new(move |pts: &[[f64; 2]]| Ok(predict_points(&net_rp, &rp, &sensors, &net_u, &problem, pts)?))
        }
    };
    let mut rows = Vec::new();
    for &t in &cfg.eval.snapshots {
        let pts: Vec<[f64; 2]> =
            linspace(0.0, problem.length, cfg.eval.snapshot_nx).into_iter().map(|x| [x, t]).collect();
        let pred = predictor(&pts)?;
        let truth = pts.iter().map(|&[x, t]| exact(x, t)).collect::<cpinn_core::Result<Vec<_>>>()?;
        rows.push(evaluate(format!("t={t}"), &pred, &truth)?);
    }
    let pred = predictor(&grid.points)?;
    rows.push(grid_eval(&pred, exact, &grid)?);

    let mut w = create(&out.join(EVAL_FILE))?;
    write_eval_csv(&mut w, &rows)?;
    w.flush()?;
    let mut w = create(&out.join(SURFACE_FILE))?;
    writeln!(w, "x,t,u_pred,u_exact")?;
    for (&[x, t], p) in grid.points.iter().zip(&pred) {
        writeln!(w, "{},{},{},{}", fmt_f64(x), fmt_f64(t), fmt_f64(*p), fmt_f64(problem.exact_u(x, t)?))?;
    }
    w.flush()?;
    for r in &rows {
        println!("{:<8} rmse {:.6e}  cc {:.7}", r.scope, r.rmse, r.cc);
    }
    Ok(rows)
}

/// Per-checkpoint diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub k: usize,
    pub sqrt_l_u: f64,
    pub solution_l2_error: f64,
    pub source_rms: f64,
    pub residual_norm: f64,
}

/// Summary of a training run's checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<ReportRow>,
    /// Rank correlation of `√L̂_U` with the solution error across checkpoints.
    pub spearman: f64,
    pub source_rms_initial: f64,
    pub source_rms_final: f64,
}

/// Grid diagnostics at every saved checkpoint.
pub fn report(cfg: &ExperimentConfig) -> Result<Summary> {
    let out = echo_config(cfg, "report")?;
    let problem = cfg.problem()?;
    let grid = make_grid(&problem, cfg.eval.diag_nx, cfg.eval.diag_nt)?;
    let mut rows = Vec::new();
    for k in 0.. {
        let pu = checkpoint_path(&out, k, "u");
        if !pu.exists() {
            break;
        }
        let net_u = Mlp::load(&pu)?;
        let net_g = load_net(&checkpoint_path(&out, k, "g"), "source checkpoint")?;
        let d = diagnostics(&net_u, &net_g, &problem, &grid)?;
        rows.push(ReportRow {
            k,
            sqrt_l_u: d.l_u.sqrt(),
            solution_l2_error: d.solution_l2_error,
            source_rms: d.source_rms,
            residual_norm: d.residual_norm,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("no checkpoints under {}", out.join(CHECKPOINT_DIR).display())));
    }
    let mut w = create(&out.join(REPORT_FILE))?;
    writeln!(w, "k,sqrt_l_u,solution_l2_error,source_rms,residual_norm")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.k,
            fmt_f64(r.sqrt_l_u),
            fmt_f64(r.solution_l2_error),
            fmt_f64(r.source_rms),
            fmt_f64(r.residual_norm)
        )?;
    }
    w.flush()?;
    let a: Vec<f64> = rows.iter().map(|r| r.sqrt_l_u).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.solution_l2_error).collect();
    let rho = if rows.len() >= 2 { spearman(&a, &b).unwrap_or(f64::NAN) } else { f64::NAN };
    let summary = Summary {
        spearman: rho,
        source_rms_initial: rows[0].source_rms,
        source_rms_final: rows[rows.len() - 1].source_rms,
        rows,
    };
    let mut w = create(&out.join(SUMMARY_FILE))?;
    writeln!(w, "metric,value")?;
    writeln!(w, "checkpoints,{}", summary.rows.len())?;
    writeln!(w, "spearman_sqrt_l_u_vs_solution_error,{}", fmt_f64(summary.spearman))?;
    writeln!(w, "source_rms_initial,{}", fmt_f64(summary.source_rms_initial))?;
    writeln!(w, "source_rms_final,{}", fmt_f64(summary.source_rms_final))?;
    w.flush()?;
    println!(
        "report: {} checkpoints, spearman(sqrt L_U, solution error) {:.4}, source rms {:.4e} -> {:.4e}",
        summary.rows.len(),
        summary.spearman,
        summary.source_rms_initial,
        summary.source_rms_final
    );
    Ok(summary)
}

/// Masked-sensor soft sensing; `masked` is 1-based.
pub fn soft_sensor(
    cfg: &ExperimentConfig,
    sensor_dir: Option<&Path>,
    masked: Option<usize>,
) -> Result<SoftSensorOutcome<f64>> {
    let out = echo_config(cfg, "soft-sensor")?;
    let problem = cfg.problem()?;
    let s = &cfg.soft_sensor;
    let ss = SoftSensorConfig {
        sample_rate: s.sample_rate,
        train_fraction: s.train_fraction,
        boundary: s.boundary,
        collocation: s.collocation,
        train: cfg.train.clone(),
        rp: cfg.rp.train.clone(),
        spec_u: cfg.net_u.clone(),
        spec_g: cfg.net_g.clone(),
        delay: if s.delay > 0.0 { Some(s.delay) } else { None },
        seed: s.seed,
    };
    let count = match sensor_dir {
        Some(_) => None,
        None => Some(s.sensors),
    };
    let zero_based = match masked {
        Some(0) => return Err(CliError::Config("sensor indices start at 1".into())),
        Some(m) => {
            if let Some(n) = count {
                if m > n {
                    return Err(CliError::Config(format!("masked sensor {m} out of range for {n} sensors")));
                }
            }
            Some(m - 1)
        }
        None => None,
    };
    let outcome = match sensor_dir {
        Some(dir) => {
            require(&dir.join("manifest.csv"), "sensor manifest")?;
            let series: Vec<Sensor> = read_sensor_dir(dir)?;
            soft_sensor_run(&problem, &series, zero_based, &ss)?
        }
        None => masked_sensor_experiment(&problem, &sensor_locations(&problem, s.sensors), zero_based, &ss)?,
    };
    let mut w = create(&out.join(SOFT_SENSOR_FILE))?;
    writeln!(w, "sensor,x,masked,scope,n,rmse,cc")?;
    for r in &outcome.sensors {
        for e in [&r.training, &r.testing, &r.all] {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.index + 1,
                fmt_f64(r.x),
                r.masked,
                e.scope,
                e.n,
                fmt_f64(e.rmse),
                fmt_f64(e.cc)
            )?;
        }
    }
    w.flush()?;
    for r in &outcome.sensors {
        println!(
            "sensor {} x={:.4}{}: training rmse {:.4e} cc {:.5} | testing rmse {:.4e} cc {:.5}",
            r.index + 1,
            r.x,
            if r.masked { " (masked)" } else { "" },
            r.training.rmse,
            r.training.cc,
            r.testing.rmse,
            r.testing.cc
        );
    }
    Ok(outcome)
}

/// Per-sensor row of a soft-sensor report file.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRow {
    pub sensor: usize,
    pub masked: bool,
    pub scope: String,
    pub rmse: f64,
    pub cc: f64,
}

pub fn read_soft_sensor_csv(path: &Path) -> Result<Vec<SensorRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CliError::Data(format!("{}: malformed row {l:?}", path.display()));
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(SensorRow {
                sensor: f[0].parse().map_err(|_| bad())?,
                masked: f[2].parse().map_err(|_| bad())?,
                scope: f[3].to_owned(),
                rmse: f[5].parse().map_err(|_| bad())?,
                cc: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// `scope,n,rmse,cc` rows of an eval file.
pub fn read_eval_csv(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CliError::Data(format!("{}: malformed row {l:?}", path.display()));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((f[0].to_owned(), f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CliError::Data(format!("{}: malformed row {l:?}", path.display()));
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(ReportRow {
                k: f[0].parse().map_err(|_| bad())?,
                sqrt_l_u: num(1)?,
                solution_l2_error: num(2)?,
                source_rms: num(3)?,
                residual_norm: num(4)?,
            })
        })
        .collect()
}
