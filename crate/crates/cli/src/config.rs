//! Experiment configuration: a TOML tree layered over per-problem presets.
//!
//! Loading starts from the preset of the selected problem kind, merges the
//! user's file over it key by key, then applies `--set key.path=value`
//! overrides. Keys that the preset does not know are rejected. The result
//! is fully resolved and serializes back to the same tree.

use std::path::{Path, PathBuf};

use cpinn_core::cpinn::SourceMode;
use cpinn_core::rp::RpTrainConfig;
use cpinn_core::sampling::NeumannLabels;
use cpinn_core::{NetSpec, Problem, ProblemKind, SamplingConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    /// Diffusivity (heat) or wave speed.
    pub a: f64,
    pub length: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSection {
    pub boundary: usize,
    pub interior: usize,
    pub collocation: usize,
    pub neumann_labels: NeumannLabels,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpSection {
    /// Number of equispaced fallback taps when no sensor directory is set.
    pub taps: usize,
    /// Tap lag; 0 selects the sensor sampling interval, or `T/100` without
    /// sensors.
    pub delay: f64,
    pub depth: usize,
    /// Sensor manifest directory; empty for none.
    pub sensor_dir: String,
    /// 1-based index of a sensor to withhold; 0 for none.
    pub masked: usize,
    pub train: RpTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    /// Full-domain grid resolution.
    pub nx: usize,
    pub nt: usize,
    /// Points along each snapshot line.
    pub snapshot_nx: usize,
    pub snapshots: Vec<f64>,
    /// Grid of the per-checkpoint diagnostics.
    pub diag_nx: usize,
    pub diag_nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftSensorSection {
    /// Equispaced synthetic sensors at `i·L/(m+1)`.
    pub sensors: usize,
    /// 1-based index of the withheld sensor; 0 for none.
    pub masked: usize,
    pub sample_rate: f64,
    pub train_fraction: f64,
    pub boundary: usize,
    pub collocation: usize,
    /// Tap lag; 0 selects the sampling interval.
    pub delay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub out_dir: String,
    pub problem: ProblemSection,
    pub sampling: SamplingSection,
    pub net_u: NetSpec,
    pub net_g: NetSpec,
    pub train: TrainConfig,
    pub rp: RpSection,
    pub eval: EvalSection,
    pub soft_sensor: SoftSensorSection,
}

impl ExperimentConfig {
    /// Benchmark defaults for one problem kind.
    pub fn preset(kind: ProblemKind) -> Self {
        let p = Problem::of_kind(kind);
        let (sampling, net_g, snapshots, train) = match kind {
            ProblemKind::Heat1D => (
                SamplingConfig::heat_benchmark(),
                NetSpec::net_g_steady(1),
                vec![3.0, 7.0],
                TrainConfig { max_outer_iters: 12, inner_iters_u: 300, inner_iters_g: 300, ..TrainConfig::default() },
            ),
            ProblemKind::Wave1D => (
                SamplingConfig::wave_benchmark(),
                NetSpec::net_g(1),
                vec![2.0, 4.0],
                TrainConfig { max_outer_iters: 16, inner_iters_u: 300, inner_iters_g: 300, ..TrainConfig::default() },
            ),
        };
        ExperimentConfig {
            out_dir: "runs".into(),
            problem: ProblemSection { kind, a: p.a, length: p.length, horizon: p.horizon },
            sampling: SamplingSection {
                boundary: sampling.boundary,
                interior: sampling.interior,
                collocation: sampling.collocation,
                neumann_labels: sampling.neumann_labels,
                noise_std: sampling.noise_std,
                seed: 0,
            },
            net_u: NetSpec::net_u(0),
            net_g,
            train,
            rp: RpSection {
                taps: 4,
                delay: 0.0,
                depth: 1,
                sensor_dir: String::new(),
                masked: 0,
                train: RpTrainConfig { iters: 500, ..RpTrainConfig::default() },
            },
            eval: EvalSection { nx: 201, nt: 201, snapshot_nx: 201, snapshots, diag_nx: 101, diag_nt: 101 },
            soft_sensor: SoftSensorSection {
                sensors: 4,
                masked: 4,
                sample_rate: 500.0,
                train_fraction: 0.01,
                boundary: 170,
                collocation: 200,
                delay: 0.0,
                seed: 0,
            },
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let p = &self.problem;
        Problem::of_kind(p.kind).with_constants(p.a, p.length, p.horizon).map_err(CliError::from)
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        let s = &self.sampling;
        SamplingConfig {
            boundary: s.boundary,
            interior: s.interior,
            collocation: s.collocation,
            neumann_labels: s.neumann_labels,
            noise_std: s.noise_std,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.problem()?;
        self.net_u.validate()?;
        if self.train.source == SourceMode::Learned {
            self.net_g.validate()?;
        }
        self.train.validate()?;
        if self.out_dir.is_empty() {
            return Err(CliError::Config("out_dir must not be empty".into()));
        }
        let e = &self.eval;
        if e.nx < 2 || e.nt < 2 || e.snapshot_nx < 2 || e.diag_nx < 2 || e.diag_nt < 2 {
            return Err(CliError::Config("evaluation grids need at least two points per axis".into()));
        }
        if let Some(t) = e.snapshots.iter().find(|&&t| !(0.0..=self.problem.horizon).contains(&t)) {
            return Err(CliError::Config(format!("snapshot t={t} lies outside [0, T]")));
        }
        if self.rp.depth == 0 || self.rp.delay < 0.0 {
            return Err(CliError::Config("rp needs depth >= 1 and delay >= 0".into()));
        }
        let s = &self.soft_sensor;
        if s.masked > s.sensors {
            return Err(CliError::Config(format!("masked sensor {} out of range for {} sensors", s.masked, s.sensors)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolves a configuration from an optional file and overrides.
    pub fn load(path: Option<&Path>, kind: Option<ProblemKind>, sets: &[String]) -> Result<Self, CliError> {
        let mut user = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        let mut overrides = Table::new();
        for s in sets {
            let (key, value) = parse_set(s)?;
            insert_path(&mut overrides, &key, value)?;
        }
        merge_free(&mut user, overrides);
        let kind = match kind {
            Some(k) => k,
            None => match user.get("problem").and_then(|p| p.get("kind")) {
                Some(v) => v.clone().try_into().map_err(|e| CliError::Config(format!("problem.kind: {e}")))?,
                None => ProblemKind::Heat1D,
            },
        };
        let mut tree = Table::try_from(Self::preset(kind)).expect("preset serializes");
        merge_checked(&mut tree, user, "")?;
        set_kind(&mut tree, kind);
        let cfg: ExperimentConfig = tree.try_into().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_kind(tree: &mut Table, kind: ProblemKind) {
    if let Some(Value::Table(p)) = tree.get_mut("problem") {
        p.insert("kind".into(), Value::try_from(kind).expect("kind serializes"));
    }
}

/// Splits `a.b.c=value`; the value is read as a TOML value, falling back to
/// a plain string.
fn parse_set(s: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))?;
    let key: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if key.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("override {s:?} has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()));
    Ok((key, value))
}

fn insert_path(root: &mut Table, key: &[String], value: Value) -> Result<(), CliError> {
    let (last, parents) = key.split_last().expect("non-empty key");
    let mut node = root;
    for k in parents {
        let entry = node.entry(k.clone()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override key {} is not a table", key.join(".")))),
        };
    }
    node.insert(last.clone(), value);
    Ok(())
}

/// Merges without checking keys, tables recursively.
fn merge_free(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge_free(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Merges `over` into `base`, rejecting keys `base` lacks.
fn merge_checked(base: &mut Table, over: Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in over {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match base.get_mut(&k) {
            None => return Err(CliError::Config(format!("unknown config key {path}"))),
            Some(Value::Table(b)) => match v {
                Value::Table(o) => merge_checked(b, o, &path)?,
                _ => return Err(CliError::Config(format!("config key {path} must be a table"))),
            },
            Some(slot) => {
                // integers are accepted where the preset holds a float
                *slot = match (&*slot, v) {
                    (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
                    (_, v) => v,
                };
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for kind in [ProblemKind::Heat1D, ProblemKind::Wave1D] {
            let cfg = ExperimentConfig::preset(kind);
            let text = cfg.to_toml();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.toml");
            std::fs::write(&path, &text).unwrap();
            let back = ExperimentConfig::load(Some(&path), None, &[]).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let sets = ["train.max_outer_iters=0".to_string(), "problem.horizon=5".to_string()];
        let cfg = ExperimentConfig::load(None, Some(ProblemKind::Wave1D), &sets).unwrap();
        assert_eq!(cfg.train.max_outer_iters, 0);
        assert_eq!(cfg.problem.horizon, 5.0);
        assert_eq!(cfg.problem.kind, ProblemKind::Wave1D);
        let bad = ExperimentConfig::load(None, None, &["train.nonsense=1".to_string()]);
        assert!(matches!(bad, Err(CliError::Config(m)) if m.contains("train.nonsense")));
        let bad = ExperimentConfig::load(None, None, &["problem.kind=\"plasma\"".to_string()]);
        assert!(matches!(bad, Err(CliError::Config(_))));
    }

    #[test]
    fn string_overrides_fall_back_to_text() {
        let cfg = ExperimentConfig::load(None, None, &["out_dir=some/where".to_string()]).unwrap();
        assert_eq!(cfg.out_dir, "some/where");
    }
}
