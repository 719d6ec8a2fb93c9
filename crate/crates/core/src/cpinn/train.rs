//! Alternating training of the solution and source networks.
//!
//! Every outer iteration first refits the source network against the
//! residual of the current (frozen) solution network, then refits the
//! solution network on labels plus residual with the new (frozen) source.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsStatus};
use super::loss::{HybridLossParts, SolutionObjective, SourceObjective};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::network::{fold_input_box, init_xavier, MlpParams, NetSpec};
use crate::pde::PdeProblem;
use crate::sampling::{fmt_f64, Dataset};
use crate::scalar::Scalar;

/// How the source network takes part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMode {
    /// Trained in alternation with the solution network.
    #[default]
    Learned,
    /// Held at the zero function: the homogeneous PINN baseline.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_outer_iters: usize,
    pub inner_iters_u: usize,
    pub inner_iters_g: usize,
    pub lbfgs_memory: usize,
    /// Stop once the total loss is at most this.
    pub tol_loss: f64,
    /// Stop once an outer iteration improves the total loss by less than
    /// this fraction.
    pub tol_stall: f64,
    /// Weight of the physics loss in the solution phase.
    pub physics_weight: f64,
    pub source: SourceMode,
    /// Fold the map from the problem domain onto `[-1, 1]` into the first
    /// layer of freshly initialized networks.
    pub normalize_inputs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_outer_iters: 50,
            inner_iters_u: 500,
            inner_iters_g: 500,
            lbfgs_memory: 20,
            tol_loss: 1e-6,
            tol_stall: 1e-8,
            physics_weight: 1.0,
            source: SourceMode::Learned,
            normalize_inputs: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lbfgs_memory == 0 {
            return Err(Error::Config("lbfgs_memory must be positive".into()));
        }
        if !(self.tol_loss > 0.0) || !(self.tol_stall > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.physics_weight >= 0.0) || !self.physics_weight.is_finite() {
            return Err(Error::Config("physics_weight must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl TrainStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainStatus::Converged => "converged",
            TrainStatus::MaxIters => "max_iters",
            TrainStatus::Diverged => "diverged",
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord<T> {
    /// 1-based outer iteration index.
    pub k: usize,
    /// Losses after the source phase (solution network still at `k-1`).
    pub after_g: HybridLossParts<T>,
    /// Losses after the solution phase.
    pub after_u: HybridLossParts<T>,
    pub iters_g: usize,
    pub iters_u: usize,
    pub wall_ms: u128,
}

/// Networks at the end of an outer iteration; index 0 holds the
/// initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub net_u: MlpParams<T>,
    pub net_g: MlpParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    pub initial: HybridLossParts<T>,
    pub records: Vec<OuterRecord<T>>,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub status: TrainStatus,
}

impl<T: Scalar> TrainReport<T> {
    pub fn final_loss(&self) -> HybridLossParts<T> {
        self.records.last().map(|r| r.after_u).unwrap_or(self.initial)
    }

    /// Writes one line per outer iteration:
    /// `k,mse_dn,mse_pn,total,iters_g,iters_u`. Wall time is left out so
    /// identical runs give identical files.
    pub fn write_records<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{RECORDS_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.after_u.mse_dn.to_f64_lossy()),
                fmt_f64(r.after_u.mse_pn.to_f64_lossy()),
                fmt_f64(r.after_u.total.to_f64_lossy()),
                r.iters_g,
                r.iters_u
            )?;
        }
        Ok(())
    }

    pub fn save_records(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_records(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

const RECORDS_HEADER: &str = "k,mse_dn,mse_pn,total,iters_g,iters_u";

/// Parsed line of a report file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLine {
    pub k: usize,
    pub mse_dn: f64,
    pub mse_pn: f64,
    pub total: f64,
    pub iters_g: usize,
    pub iters_u: usize,
}

pub fn read_records(path: &Path) -> Result<Vec<RecordLine>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RECORDS_HEADER) {
        return Err(Error::Config(format!("{}: not a training report", path.display())));
    }
    let bad = |l: &str| Error::Config(format!("{}: malformed record {l:?}", path.display()));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(l));
            }
            Ok(RecordLine {
                k: f[0].parse().map_err(|_| bad(l))?,
                mse_dn: f[1].parse().map_err(|_| bad(l))?,
                mse_pn: f[2].parse().map_err(|_| bad(l))?,
                total: f[3].parse().map_err(|_| bad(l))?,
                iters_g: f[4].parse().map_err(|_| bad(l))?,
                iters_u: f[5].parse().map_err(|_| bad(l))?,
            })
        })
        .collect()
}

/// Result of one optimization phase.
#[derive(Debug, Clone)]
pub struct PhaseOutcome<T> {
    pub net: MlpParams<T>,
    pub iterations: usize,
    pub status: LbfgsStatus,
    pub history: Vec<T>,
}

/// Refits the source network against the residual of `net_u_frozen`.
pub fn train_netg_phase<T: Scalar>(
    net_g: &MlpParams<T>,
    net_u_frozen: &MlpParams<T>,
    dataset: &Dataset<T>,
    problem: &PdeProblem<T>,
    budget: usize,
    memory: usize,
) -> Result<PhaseOutcome<T>> {
    let objective = SourceObjective::for_network(problem, dataset, net_u_frozen)?;
    minimize_source(net_g, &objective, budget, memory)
}

fn minimize_source<T: Scalar>(
    net_g: &MlpParams<T>,
    objective: &SourceObjective<T>,
    budget: usize,
    memory: usize,
) -> Result<PhaseOutcome<T>> {
    let cfg = LbfgsConfig { max_iters: budget, memory, ..LbfgsConfig::default() };
    let mut scratch = net_g.clone();
    let r = lbfgs_minimize(
        |theta: &[T]| {
            scratch.as_flat_mut().copy_from_slice(theta);
            let (l, g) = objective.eval(&scratch)?;
            Ok((l, g.into_vec()))
        },
        net_g.as_flat().to_vec(),
        &cfg,
    )?;
    Ok(PhaseOutcome { net: net_g.with_flat(r.params)?, iterations: r.iterations, status: r.status, history: r.history })
}

/// Refits the solution network on the hybrid loss with `net_g_frozen` as
/// source.
pub fn train_netu_phase<T: Scalar, G: Field<T>>(
    net_u: &MlpParams<T>,
    net_g_frozen: &G,
    dataset: &Dataset<T>,
    problem: &PdeProblem<T>,
    physics_weight: T,
    budget: usize,
    memory: usize,
) -> Result<PhaseOutcome<T>> {
    let objective = SolutionObjective::for_dataset(problem, dataset, net_g_frozen, physics_weight)?;
    minimize_solution(net_u, &objective, budget, memory)
}

/// Both phases of one outer iteration with the losses after each.
type OuterStep<T> = (PhaseOutcome<T>, HybridLossParts<T>, PhaseOutcome<T>, HybridLossParts<T>);

pub(crate) fn minimize_solution<T: Scalar>(
    net_u: &MlpParams<T>,
    objective: &SolutionObjective<'_, T>,
    budget: usize,
    memory: usize,
) -> Result<PhaseOutcome<T>> {
    let cfg = LbfgsConfig { max_iters: budget, memory, ..LbfgsConfig::default() };
    let mut scratch = net_u.clone();
    let r = lbfgs_minimize(
        |theta: &[T]| {
            scratch.as_flat_mut().copy_from_slice(theta);
            let (parts, g) = objective.eval(&scratch)?;
            Ok((objective.objective_value(&parts), g.into_vec()))
        },
        net_u.as_flat().to_vec(),
        &cfg,
    )?;
    Ok(PhaseOutcome { net: net_u.with_flat(r.params)?, iterations: r.iterations, status: r.status, history: r.history })
}

/// Trained networks and the run's report.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub net_u: MlpParams<T>,
    pub net_g: MlpParams<T>,
    pub report: TrainReport<T>,
}

/// Initializes both networks from their specs and runs
/// [`hierarchical_train_from`].
pub fn hierarchical_train<T: Scalar>(
    problem: &PdeProblem<T>,
    dataset: &Dataset<T>,
    spec_u: &NetSpec,
    spec_g: &NetSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut net_u = init_xavier(spec_u)?;
    let mut net_g = match cfg.source {
        SourceMode::Learned => init_xavier(spec_g)?,
        SourceMode::Zero => MlpParams::zeros(&spec_g.layer_sizes())?,
    };
    if cfg.normalize_inputs {
        let lo = [T::zero(), T::zero()];
        let hi = [problem.length, problem.horizon];
        fold_input_box(&mut net_u, &lo, &hi)?;
        let d = net_g.input_dim().min(2);
        fold_input_box(&mut net_g, &lo[..d], &hi[..d])?;
    }
    hierarchical_train_from(problem, dataset, net_u, net_g, cfg)
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Numeric { .. })
}

/// Alternating training from given initial networks.
///
/// A non-finite loss stops the run with [`TrainStatus::Diverged`] and
/// returns the last finite checkpoint.
pub fn hierarchical_train_from<T: Scalar>(
    problem: &PdeProblem<T>,
    dataset: &Dataset<T>,
    mut net_u: MlpParams<T>,
    mut net_g: MlpParams<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if net_u.input_dim() != 2 || !(1..=2).contains(&net_g.input_dim()) {
        return Err(Error::Structural("solution network takes (x, t), source network x or (x, t)".into()));
    }
    if dataset.num_labeled() == 0 {
        return Err(Error::Config("training needs labeled data".into()));
    }
    let weight = T::lit(cfg.physics_weight);
    let initial = {
        let obj = SolutionObjective::for_dataset(problem, dataset, &net_g, weight)?;
        match obj.eval(&net_u) {
            Ok((parts, _)) => parts,
            Err(e) if is_divergence(&e) => {
                let cp = Checkpoint { net_u: net_u.clone(), net_g: net_g.clone() };
                let report = TrainReport {
                    initial: HybridLossParts::new(T::nan(), T::nan()),
                    records: vec![],
                    checkpoints: vec![cp],
                    status: TrainStatus::Diverged,
                };
                return Ok(TrainOutcome { net_u, net_g, report });
            }
            Err(e) => return Err(e),
        }
    };
    let mut report = TrainReport {
        initial,
        records: Vec::new(),
        checkpoints: vec![Checkpoint { net_u: net_u.clone(), net_g: net_g.clone() }],
        status: TrainStatus::MaxIters,
    };
    let mut prev_total = initial.total;
    for k in 1..=cfg.max_outer_iters {
        let started = Instant::now();
        let step = (|| -> Result<OuterStep<T>> {
            // source phase, solution network from the previous iteration
            let g_phase = match cfg.source {
                SourceMode::Learned => {
                    train_netg_phase(&net_g, &net_u, dataset, problem, cfg.inner_iters_g, cfg.lbfgs_memory)?
                }
                SourceMode::Zero => PhaseOutcome {
                    net: net_g.clone(),
                    iterations: 0,
                    status: LbfgsStatus::GradientTolerance,
                    history: vec![],
                },
            };
            let obj = SolutionObjective::for_dataset(problem, dataset, &g_phase.net, weight)?;
            let (after_g, _) = obj.eval(&net_u)?;
            let u_phase = minimize_solution(&net_u, &obj, cfg.inner_iters_u, cfg.lbfgs_memory)?;
            let (after_u, _) = obj.eval(&u_phase.net)?;
            Ok((g_phase, after_g, u_phase, after_u))
        })();
        let (g_phase, after_g, u_phase, after_u) = match step {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => {
                report.status = TrainStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        net_g = g_phase.net;
        net_u = u_phase.net;
        report.records.push(OuterRecord {
            k,
            after_g,
            after_u,
            iters_g: g_phase.iterations,
            iters_u: u_phase.iterations,
            wall_ms: started.elapsed().as_millis(),
        });
        report.checkpoints.push(Checkpoint { net_u: net_u.clone(), net_g: net_g.clone() });
        let total = after_u.total;
        if total <= T::lit(cfg.tol_loss) {
            report.status = TrainStatus::Converged;
            break;
        }
        if prev_total > T::zero() && (prev_total - total) / prev_total < T::lit(cfg.tol_stall) {
            report.status = TrainStatus::Converged;
            break;
        }
        prev_total = total;
    }
    Ok(TrainOutcome { net_u, net_g, report })
}
