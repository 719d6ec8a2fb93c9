//! Recurrent prediction: the solution network augmented with delayed taps.
//!
//! Each tap is a spatial location `x_s`. At a query `(x, t)` the network
//! sees `[x, t, v_1, …, v_m]` where `v_i` is the field at `(x_s, t − τ)`:
//! the interpolated measurement when a hard sensor sits at `x_s`, otherwise
//! the output of the trained solution network. Before `t = τ` the taps
//! carry the initial condition.
//!
//! Tap values are computed once from frozen sources, so training the tapped
//! network is an ordinary static optimization.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpinn::lbfgs::LbfgsStatus;
use crate::cpinn::loss::SolutionObjective;
use crate::cpinn::train::{hierarchical_train, minimize_solution, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::metrics::{evaluate, EvalResult};
use crate::network::{fill_xavier, MlpParams, NetSpec};
use crate::pde::PdeProblem;
use crate::sampling::{fmt_f64, sample, Dataset, EvalGrid, Sample, SamplingConfig};
use crate::scalar::Scalar;

/// Where a tap's value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapSource {
    HardSensor,
    CpinnFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpConfig<T> {
    pub tap_points: Vec<T>,
    /// Lag τ of every tap.
    pub delay: T,
    pub availability: Vec<TapSource>,
    /// Delays per tap: `t − τ, …, t − depth·τ`.
    pub depth: usize,
}

impl<T: Scalar> RpConfig<T> {
    /// All taps fed by the trained solution network.
    pub fn fallback_only(tap_points: Vec<T>, delay: T) -> Self {
        let availability = vec![TapSource::CpinnFallback; tap_points.len()];
        RpConfig { tap_points, delay, availability, depth: 1 }
    }

    /// `m` equispaced interior taps, `x_i = i·L/(m+1)`.
    pub fn equispaced(problem: &PdeProblem<T>, m: usize, delay: T) -> Self {
        let step = problem.length / T::from_usize_lossy(m + 1);
        Self::fallback_only((1..=m).map(|i| step * T::from_usize_lossy(i)).collect(), delay)
    }

    pub fn num_taps(&self) -> usize {
        self.tap_points.len() * self.depth
    }

    pub fn input_dim(&self) -> usize {
        2 + self.num_taps()
    }

    pub fn validate(&self, problem: &PdeProblem<T>) -> Result<()> {
        if self.availability.len() != self.tap_points.len() {
            return Err(Error::Config(format!(
                "{} taps but {} availability flags",
                self.tap_points.len(),
                self.availability.len()
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("tap depth must be at least 1".into()));
        }
        if !(self.delay > T::zero()) || self.delay >= problem.horizon {
            return Err(Error::Config("tap delay must lie in (0, T)".into()));
        }
        if let Some(x) = self.tap_points.iter().find(|&&x| !problem.contains(x, T::zero())) {
            return Err(Error::Config(format!("tap at x={x} lies outside [0, L]")));
        }
        Ok(())
    }
}

/// Uniformly sampled measurements of one hard sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries<T> {
    pub x: T,
    pub t0: T,
    pub dt: T,
    pub values: Vec<T>,
}

impl<T: Scalar> SensorSeries<T> {
    /// Validates that `times` are strictly increasing and uniformly spaced
    /// to within 1e-9 relative.
    pub fn new(x: T, times: &[T], values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Structural(format!("{} times but {} values", times.len(), values.len())));
        }
        if times.len() < 2 {
            return Err(Error::Config("sensor series needs at least two samples".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / T::from_usize_lossy(times.len() - 1);
        if !(dt > T::zero()) {
            return Err(Error::Config("sensor times must be strictly increasing".into()));
        }
        let tol = T::lit(1e-9) * dt.max(T::one());
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Config(format!("sensor times not increasing at sample {}", i + 1)));
            }
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(Error::Config(format!("sensor times not uniform at sample {}", i + 1)));
            }
        }
        Ok(SensorSeries { x, t0: times[0], dt, values })
    }

    pub fn uniform(x: T, t0: T, dt: T, values: Vec<T>) -> Self {
        SensorSeries { x, t0, dt, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> T {
        self.t0 + self.dt * T::from_usize_lossy(i)
    }

    pub fn t_end(&self) -> T {
        self.time(self.values.len() - 1)
    }

    /// Index range `[lo, hi]` of the samples read by [`Self::value_at`].
    pub fn bracket(&self, t: T) -> Result<(usize, usize)> {
        let eps = self.dt * T::lit(1e-9);
        if self.values.is_empty() || t < self.t0 - eps || t > self.t_end() + eps {
            return Err(Error::DataGap { x: self.x.to_f64_lossy(), t: t.to_f64_lossy() });
        }
        let pos = ((t - self.t0) / self.dt).max(T::zero());
        let last = self.values.len() - 1;
        let lo = pos.floor().to_usize().unwrap_or(0).min(last);
        let frac = pos - T::from_usize_lossy(lo);
        if frac <= T::lit(1e-9) || lo == last {
            Ok((lo, lo))
        } else if frac >= T::one() - T::lit(1e-9) {
            Ok((lo + 1, lo + 1))
        } else {
            Ok((lo, lo + 1))
        }
    }

    /// Linear interpolation in time.
    pub fn value_at(&self, t: T) -> Result<T> {
        let (lo, hi) = self.bracket(t)?;
        if lo == hi {
            return Ok(self.values[lo]);
        }
        let w = (t - self.time(lo)) / self.dt;
        Ok(self.values[lo] * (T::one() - w) + self.values[hi] * w)
    }

    /// Reads a `t,u` CSV file.
    pub fn read_csv(path: &Path, x: T) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != ["t", "u"] {
            return Err(Error::Config(format!("{}: expected header t,u", path.display())));
        }
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<T> {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::Config(format!("{}: bad number {s:?}", path.display())))
            };
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Self::new(x, &times, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "u"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([fmt_f64(self.time(i).to_f64_lossy()), fmt_f64(v.to_f64_lossy())])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Manifest line: sensor file and its location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub x: f64,
}

/// Reads `manifest.csv` (`file,x`) in `dir` and every series it lists.
pub fn read_sensor_dir<T: Scalar>(dir: &Path) -> Result<Vec<SensorSeries<T>>> {
    let path = dir.join("manifest.csv");
    if !path.exists() {
        return Err(Error::Config(format!("missing sensor manifest {}", path.display())));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let e: ManifestEntry = rec?;
        out.push(SensorSeries::read_csv(&dir.join(&e.file), T::lit(e.x))?);
    }
    Ok(out)
}

pub fn write_sensor_dir<T: Scalar>(dir: &Path, sensors: &[SensorSeries<T>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("manifest.csv"))?;
    for (i, s) in sensors.iter().enumerate() {
        let file = PathBuf::from(format!("sensor_{}.csv", i + 1));
        s.write_csv(&dir.join(&file))?;
        w.serialize(ManifestEntry { file, x: s.x.to_f64_lossy() })?;
    }
    w.flush()?;
    Ok(())
}

/// Source actually used for one tap value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Index into the sensor list.
    Sensor(usize),
    Cpinn,
    InitialCondition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapValue<T> {
    pub tap: usize,
    /// 1-based delay multiple.
    pub lag: usize,
    /// Time the value refers to (`t − lag·τ`).
    pub time: T,
    pub value: T,
    pub source: Provenance,
}

fn find_sensor<T: Scalar>(sensors: &[SensorSeries<T>], x: T) -> Option<usize> {
    let tol = T::lit(1e-9) * x.abs().max(T::one());
    sensors.iter().position(|s| (s.x - x).abs() <= tol)
}

/// Network input at `(x, t)` with provenance of every tap value.
pub fn build_rp_input_traced<T: Scalar, U: Field<T>>(
    x: T,
    t: T,
    cfg: &RpConfig<T>,
    sensors: &[SensorSeries<T>],
    cpinn_u: &U,
    problem: &PdeProblem<T>,
) -> Result<(Vec<T>, Vec<TapValue<T>>)> {
    if !problem.contains(x, t) {
        return Err(Error::Domain { x: x.to_f64_lossy(), t: t.to_f64_lossy() });
    }
    let mut input = Vec::with_capacity(cfg.input_dim());
    input.push(x);
    input.push(t);
    let mut trace = Vec::with_capacity(cfg.num_taps());
    for (tap, (&xs, &avail)) in cfg.tap_points.iter().zip(&cfg.availability).enumerate() {
        for lag in 1..=cfg.depth {
            let time = t - cfg.delay * T::from_usize_lossy(lag);
            let (value, source) = if time < T::zero() {
                (problem.initial_value(xs), Provenance::InitialCondition)
            } else {
                match avail {
                    TapSource::HardSensor => {
                        let idx = find_sensor(sensors, xs)
                            .ok_or(Error::DataGap { x: xs.to_f64_lossy(), t: time.to_f64_lossy() })?;
                        (sensors[idx].value_at(time)?, Provenance::Sensor(idx))
                    }
                    TapSource::CpinnFallback => (cpinn_u.value(xs, time)?, Provenance::Cpinn),
                }
            };
            input.push(value);
            trace.push(TapValue { tap, lag, time, value, source });
        }
    }
    Ok((input, trace))
}

/// `[x, t, v_1, …]` for the tapped network.
pub fn build_rp_input<T: Scalar, U: Field<T>>(
    x: T,
    t: T,
    cfg: &RpConfig<T>,
    sensors: &[SensorSeries<T>],
    cpinn_u: &U,
    problem: &PdeProblem<T>,
) -> Result<Vec<T>> {
    build_rp_input_traced(x, t, cfg, sensors, cpinn_u, problem).map(|(v, _)| v)
}

fn build_many<T: Scalar, U: Field<T>>(
    points: &[[T; 2]],
    cfg: &RpConfig<T>,
    sensors: &[SensorSeries<T>],
    cpinn_u: &U,
    problem: &PdeProblem<T>,
) -> Result<Vec<Vec<T>>> {
    points.par_iter().map(|&[x, t]| build_rp_input(x, t, cfg, sensors, cpinn_u, problem)).collect()
}

/// Tapped network initialized from a trained solution network: the
/// `(x, t)` columns of the first layer and all later layers are copied,
/// tap columns are Xavier-uniform.
pub fn init_netu_rp<T: Scalar>(cpinn_u: &MlpParams<T>, taps: usize, seed: u64) -> Result<MlpParams<T>> {
    if cpinn_u.input_dim() != 2 {
        return Err(Error::Structural("solution network must take (x, t)".into()));
    }
    let mut sizes = cpinn_u.layer_sizes().to_vec();
    sizes[0] = 2 + taps;
    let mut net = MlpParams::zeros(&sizes)?;
    let width = sizes[1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tap_w = vec![T::zero(); width * taps];
    fill_xavier(&mut tap_w, sizes[0], width, &mut rng);
    for r in 0..width {
        net.set_weight(0, r, 0, cpinn_u.weight(0, r, 0));
        net.set_weight(0, r, 1, cpinn_u.weight(0, r, 1));
        for c in 0..taps {
            net.set_weight(0, r, 2 + c, tap_w[r * taps + c]);
        }
        net.set_bias(0, r, cpinn_u.bias(0, r));
    }
    let src = cpinn_u.as_flat();
    let start_src = cpinn_u.layout()[0].end();
    let start_dst = net.layout()[0].end();
    net.as_flat_mut()[start_dst..].copy_from_slice(&src[start_src..]);
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpTrainConfig {
    pub iters: usize,
    pub lbfgs_memory: usize,
    pub physics_weight: f64,
    pub seed: u64,
}

impl Default for RpTrainConfig {
    fn default() -> Self {
        RpTrainConfig { iters: 1000, lbfgs_memory: 20, physics_weight: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct RpOutcome<T> {
    pub net: MlpParams<T>,
    pub initial_loss: T,
    pub final_loss: T,
    pub history: Vec<T>,
    pub status: LbfgsStatus,
}

/// Trains the tapped network on the hybrid loss with the source frozen at
/// `cpinn_g`. Collocation points are the ones the solution network used.
#[allow(clippy::too_many_arguments)]
pub fn train_netu_rp<T: Scalar, G: Field<T>>(
    cpinn_u: &MlpParams<T>,
    cpinn_g: &G,
    dataset: &Dataset<T>,
    problem: &PdeProblem<T>,
    rp_cfg: &RpConfig<T>,
    sensors: &[SensorSeries<T>],
    cfg: &RpTrainConfig,
) -> Result<RpOutcome<T>> {
    rp_cfg.validate(problem)?;
    let init = init_netu_rp(cpinn_u, rp_cfg.num_taps(), cfg.seed)?;
    let labeled: Vec<[T; 2]> = dataset.labeled().map(Sample::xt).collect();
    let colloc = dataset.collocation();
    let mut objective = SolutionObjective::for_dataset(problem, dataset, cpinn_g, T::lit(cfg.physics_weight))?;
    objective.data_inputs = build_many(&labeled, rp_cfg, sensors, cpinn_u, problem)?;
    objective.colloc_inputs = build_many(&colloc, rp_cfg, sensors, cpinn_u, problem)?;
    let phase = minimize_solution(&init, &objective, cfg.iters, cfg.lbfgs_memory)?;
    let initial_loss = phase.history.first().copied().unwrap_or_else(T::nan);
    let final_loss = phase.history.last().copied().unwrap_or_else(T::nan);
    Ok(RpOutcome { net: phase.net, initial_loss, final_loss, history: phase.history, status: phase.status })
}

/// Tapped-network output at arbitrary points.
pub fn predict_points<T: Scalar, U: Field<T>>(
    net_u_rp: &MlpParams<T>,
    rp_cfg: &RpConfig<T>,
    sensors: &[SensorSeries<T>],
    cpinn_u: &U,
    problem: &PdeProblem<T>,
    points: &[[T; 2]],
) -> Result<Vec<T>> {
    if net_u_rp.input_dim() != rp_cfg.input_dim() {
        return Err(Error::Structural(format!(
            "tapped network takes {} inputs, configuration provides {}",
            net_u_rp.input_dim(),
            rp_cfg.input_dim()
        )));
    }
    let inputs = build_many(points, rp_cfg, sensors, cpinn_u, problem)?;
    crate::autodiff::forward_many(net_u_rp, &inputs)
}

/// Soft-sensor output over a grid, in grid order.
pub fn predict<T: Scalar, U: Field<T>>(
    net_u_rp: &MlpParams<T>,
    rp_cfg: &RpConfig<T>,
    sensors: &[SensorSeries<T>],
    cpinn_u: &U,
    problem: &PdeProblem<T>,
    grid: &EvalGrid<T>,
) -> Result<Vec<T>> {
    predict_points(net_u_rp, rp_cfg, sensors, cpinn_u, problem, &grid.points)
}

/// Settings of the masked-sensor protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftSensorConfig {
    /// Samples per unit time of the synthetic sensor series.
    pub sample_rate: f64,
    /// Fraction of all sensor samples used for training.
    pub train_fraction: f64,
    /// Boundary/initial labels drawn from the problem's conditions.
    pub boundary: usize,
    /// Extra unlabeled collocation points.
    pub collocation: usize,
    pub train: TrainConfig,
    pub rp: RpTrainConfig,
    pub spec_u: NetSpec,
    pub spec_g: NetSpec,
    /// Tap delay; defaults to the sensor sampling interval.
    pub delay: Option<f64>,
    pub seed: u64,
}

impl Default for SoftSensorConfig {
    fn default() -> Self {
        SoftSensorConfig {
            sample_rate: 100.0,
            train_fraction: 0.01,
            boundary: 170,
            collocation: 0,
            train: TrainConfig::default(),
            rp: RpTrainConfig::default(),
            spec_u: NetSpec::net_u(1),
            spec_g: NetSpec::net_g(2),
            delay: None,
            seed: 0,
        }
    }
}

/// Metrics of one sensor location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorReport<T> {
    pub index: usize,
    pub x: T,
    pub masked: bool,
    /// At the training time stamps.
    pub training: EvalResult<T>,
    /// At the remaining time stamps.
    pub testing: EvalResult<T>,
    /// At every time stamp.
    pub all: EvalResult<T>,
}

#[derive(Debug, Clone)]
pub struct SoftSensorOutcome<T> {
    pub sensors: Vec<SensorReport<T>>,
    pub cpinn: TrainReport<T>,
    pub rp: RpOutcome<T>,
    pub rp_config: RpConfig<T>,
    pub net_u: MlpParams<T>,
    pub net_g: MlpParams<T>,
}

/// Synthetic series from the closed-form solution at each location.
pub fn synthetic_series<T: Scalar>(
    problem: &PdeProblem<T>,
    locs: &[T],
    sample_rate: f64,
) -> Result<Vec<SensorSeries<T>>> {
    if !(sample_rate > 0.0) {
        return Err(Error::Config("sample_rate must be positive".into()));
    }
    let n = (problem.horizon.to_f64_lossy() * sample_rate).floor() as usize + 1;
    let dt = T::lit(1.0 / sample_rate);
    locs.iter()
        .map(|&x| {
            let values = (0..n)
                .map(|i| problem.exact_u(x, (dt * T::from_usize_lossy(i)).min(problem.horizon)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SensorSeries::uniform(x, T::zero(), dt, values))
        })
        .collect()
}

/// Trains the coupled networks and the tapped network on a small subset of
/// sensor samples, with sensor `masked` withheld, and scores every sensor.
pub fn soft_sensor_run<T: Scalar>(
    problem: &PdeProblem<T>,
    series: &[SensorSeries<T>],
    masked: Option<usize>,
    cfg: &SoftSensorConfig,
) -> Result<SoftSensorOutcome<T>> {
    if series.len() < 2 {
        return Err(Error::Config("soft sensing needs at least two sensors".into()));
    }
    if let Some(m) = masked {
        if m >= series.len() {
            return Err(Error::Config(format!("masked sensor {m} out of range for {} sensors", series.len())));
        }
    }
    let n_times = series[0].len();
    if series.iter().any(|s| s.len() != n_times || s.t0 != series[0].t0 || s.dt != series[0].dt) {
        return Err(Error::Config("sensor series must share their time base".into()));
    }
    let unmasked: Vec<usize> = (0..series.len()).filter(|&i| Some(i) != masked).collect();
    let total = n_times * series.len();
    let n_train = ((cfg.train_fraction * total as f64).round() as usize).max(unmasked.len());
    let per_sensor = n_train.div_ceil(unmasked.len()).min(n_times);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n_times).collect();
    order.shuffle(&mut rng);
    let mut train_idx: Vec<usize> = order[..per_sensor].to_vec();
    train_idx.sort_unstable();

    let sampling = SamplingConfig {
        boundary: cfg.boundary,
        interior: 0,
        collocation: cfg.collocation,
        ..SamplingConfig::default()
    };
    let mut dataset = sample(problem, &sampling, cfg.seed.wrapping_add(1))?;
    for &s in &unmasked {
        for &j in &train_idx {
            dataset.d_i.push(Sample::value(series[s].x, series[s].time(j), series[s].values[j]));
        }
    }

    let cpinn = hierarchical_train(problem, &dataset, &cfg.spec_u, &cfg.spec_g, &cfg.train)?;
    let delay = cfg.delay.map(T::lit).unwrap_or(series[0].dt);
    let rp_config = RpConfig {
        tap_points: series.iter().map(|s| s.x).collect(),
        delay,
        availability: (0..series.len())
            .map(|i| if Some(i) == masked { TapSource::CpinnFallback } else { TapSource::HardSensor })
            .collect(),
        depth: 1,
    };
    let rp = train_netu_rp(&cpinn.net_u, &cpinn.net_g, &dataset, problem, &rp_config, series, &cfg.rp)?;

    let is_train: Vec<bool> = {
        let mut v = vec![false; n_times];
        for &j in &train_idx {
            v[j] = true;
        }
        v
    };
    let mut reports = Vec::with_capacity(series.len());
    for (i, s) in series.iter().enumerate() {
        let points: Vec<[T; 2]> = (0..n_times).map(|j| [s.x, s.time(j).min(problem.horizon)]).collect();
        let pred = predict_points(&rp.net, &rp_config, series, &cpinn.net_u, problem, &points)?;
        let pick = |want: bool| -> (Vec<T>, Vec<T>) {
            (0..n_times).filter(|&j| is_train[j] == want).map(|j| (pred[j], s.values[j])).unzip()
        };
        let (tp, tt) = pick(true);
        let (vp, vt) = pick(false);
        reports.push(SensorReport {
            index: i,
            x: s.x,
            masked: Some(i) == masked,
            training: evaluate("training", &tp, &tt)?,
            testing: evaluate("testing", &vp, &vt)?,
            all: evaluate("all", &pred, &s.values)?,
        });
    }
    Ok(SoftSensorOutcome {
        sensors: reports,
        cpinn: cpinn.report,
        rp,
        rp_config,
        net_u: cpinn.net_u,
        net_g: cpinn.net_g,
    })
}

/// Masked-sensor protocol on synthetic data from the closed-form solution.
pub fn masked_sensor_experiment<T: Scalar>(
    problem: &PdeProblem<T>,
    sensor_locs: &[T],
    masked: Option<usize>,
    cfg: &SoftSensorConfig,
) -> Result<SoftSensorOutcome<T>> {
    if let Some(m) = masked {
        if m >= sensor_locs.len() {
            return Err(Error::Config(format!("masked sensor {m} out of range for {} sensors", sensor_locs.len())));
        }
    }
    let series = synthetic_series(problem, sensor_locs, cfg.sample_rate)?;
    soft_sensor_run(problem, &series, masked, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_xavier;
    use crate::pde::exact_wave;

    fn heat() -> PdeProblem<f64> {
        PdeProblem::heat()
    }

    #[test]
    fn ic_padding_before_delay() {
        let p = heat();
        let u = init_xavier::<f64>(&NetSpec::net_u(0)).unwrap();
        let cfg = RpConfig::fallback_only(vec![0.5, 2.0], 0.3);
        let (v, trace) = build_rp_input_traced(1.0, 0.1, &cfg, &[], &u, &p).unwrap();
        assert_eq!(v, vec![1.0, 0.1, (0.25f64).sin(), 1.0f64.sin()]);
        assert!(trace.iter().all(|t| t.source == Provenance::InitialCondition));
    }

    #[test]
    fn fallback_taps_use_the_solution_network() {
        let p = heat();
        let u = init_xavier::<f64>(&NetSpec::net_u(0)).unwrap();
        let cfg = RpConfig::fallback_only(vec![0.5], 0.3);
        let v = build_rp_input(1.0, 2.0, &cfg, &[], &u, &p).unwrap();
        assert_eq!(v[2], u.forward(&[0.5, 1.7]).unwrap());
        let junk = vec![SensorSeries::uniform(0.5, 0.0, 0.1, vec![99.0; 200])];
        assert_eq!(build_rp_input(1.0, 2.0, &cfg, &junk, &u, &p).unwrap(), v);
    }

    #[test]
    fn hard_sensor_interpolation_is_accurate() {
        let p = PdeProblem::<f64>::wave();
        let u = init_xavier::<f64>(&NetSpec::net_u(0)).unwrap();
        let xs = 1.1;
        let series = synthetic_series(&p, &[xs], 2048.0).unwrap();
        let cfg = RpConfig { availability: vec![TapSource::HardSensor], ..RpConfig::fallback_only(vec![xs], 0.01) };
        for t in [0.5, 1.2345, 3.0001, 5.999] {
            let (v, trace) = build_rp_input_traced(0.3, t, &cfg, &series, &u, &p).unwrap();
            assert!((v[2] - exact_wave(xs, t - 0.01)).abs() <= 1e-6);
            assert_eq!(trace[0].source, Provenance::Sensor(0));
        }
    }

    #[test]
    fn missing_sensor_data_is_a_gap() {
        let p = heat();
        let u = init_xavier::<f64>(&NetSpec::net_u(0)).unwrap();
        let cfg = RpConfig { availability: vec![TapSource::HardSensor], ..RpConfig::fallback_only(vec![1.0], 0.5) };
        let short = vec![SensorSeries::uniform(1.0, 0.0, 0.1, vec![0.0; 11])];
        assert!(build_rp_input(0.0, 1.2, &cfg, &short, &u, &p).is_ok());
        assert!(matches!(build_rp_input(0.0, 3.0, &cfg, &short, &u, &p), Err(Error::DataGap { .. })));
        assert!(matches!(build_rp_input(0.0, 3.0, &cfg, &[], &u, &p), Err(Error::DataGap { .. })));
    }

    #[test]
    fn series_validation() {
        assert!(SensorSeries::new(0.0, &[0.0, 0.1, 0.2], vec![1.0, 2.0, 3.0]).is_ok());
        assert!(SensorSeries::new(0.0, &[0.0, 0.1, 0.25], vec![1.0, 2.0, 3.0]).is_err());
        assert!(SensorSeries::new(0.0, &[0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(SensorSeries::new(0.0, &[0.0, 0.1], vec![1.0]).is_err());
        let s = SensorSeries::new(0.0, &[1.0, 2.0, 3.0], vec![0.0, 10.0, 20.0]).unwrap();
        assert_eq!(s.value_at(1.5).unwrap(), 5.0);
        assert_eq!(s.value_at(3.0).unwrap(), 20.0);
        assert!(s.value_at(0.5).is_err());
    }

    #[test]
    fn init_copies_solution_columns() {
        let u = init_xavier::<f64>(&NetSpec::net_u(4)).unwrap();
        let rp = init_netu_rp(&u, 3, 9).unwrap();
        assert_eq!(rp.layer_sizes(), &[5, 30, 30, 30, 1]);
        for r in 0..30 {
            assert_eq!(rp.weight(0, r, 0), u.weight(0, r, 0));
            assert_eq!(rp.weight(0, r, 1), u.weight(0, r, 1));
        }
        let a = u.layout()[0].end();
        let b = rp.layout()[0].end();
        assert_eq!(&u.as_flat()[a..], &rp.as_flat()[b..]);
        // no taps: an exact copy
        assert_eq!(init_netu_rp(&u, 0, 1).unwrap(), u);
    }

    #[test]
    fn config_validation() {
        let p = heat();
        let mut cfg = RpConfig::equispaced(&p, 4, 0.05);
        assert!(cfg.validate(&p).is_ok());
        assert!((cfg.tap_points[1] - 2.0 * std::f64::consts::PI / 5.0).abs() < 1e-15);
        cfg.delay = 11.0;
        assert!(cfg.validate(&p).is_err());
        cfg.delay = 0.1;
        cfg.tap_points[0] = 4.0;
        assert!(cfg.validate(&p).is_err());
        cfg.tap_points[0] = 1.0;
        cfg.availability.pop();
        assert!(cfg.validate(&p).is_err());
    }

    #[test]
    fn sensor_dir_round_trip() {
        let p = PdeProblem::<f64>::wave();
        let s = synthetic_series(&p, &[0.5, 1.0], 10.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sensor_dir(dir.path(), &s).unwrap();
        let back = read_sensor_dir::<f64>(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].values, s[1].values);
        assert!((back[1].dt - 0.1).abs() < 1e-15);
    }

    #[test]
    fn masked_index_out_of_range() {
        let p = PdeProblem::<f64>::wave();
        let r = masked_sensor_experiment(&p, &[0.5, 1.0, 1.5, 2.0], Some(4), &SoftSensorConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
