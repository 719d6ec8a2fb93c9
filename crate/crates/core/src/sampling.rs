//! Training sets, collocation sets and evaluation grids.

use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{EdgeCondition, PdeProblem, ProblemKind};
use crate::scalar::Scalar;

/// What a label prescribes at its point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    /// `u(x, t)`.
    Value,
    /// `∂u/∂x (x, t)`, from a Neumann edge.
    SlopeX,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub x: T,
    pub t: T,
    pub u: T,
    pub kind: LabelKind,
}

impl<T: Scalar> Sample<T> {
    pub fn value(x: T, t: T, u: T) -> Self {
        Sample { x, t, u, kind: LabelKind::Value }
    }

    pub fn xt(&self) -> [T; 2] {
        [self.x, self.t]
    }
}

/// Labeled boundary/initial points, labeled interior points and unlabeled
/// collocation points.
///
/// The collocation set is `E = E_B ∪ E_I ∪ extra`, where `E_B` and `E_I`
/// are the coordinates of `d_b` and `d_i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset<T> {
    pub d_b: Vec<Sample<T>>,
    pub d_i: Vec<Sample<T>>,
    pub extra_collocation: Vec<[T; 2]>,
}

impl<T: Scalar> Dataset<T> {
    pub fn labeled(&self) -> impl Iterator<Item = &Sample<T>> {
        self.d_b.iter().chain(&self.d_i)
    }

    pub fn num_labeled(&self) -> usize {
        self.d_b.len() + self.d_i.len()
    }

    pub fn e_b(&self) -> Vec<[T; 2]> {
        self.d_b.iter().map(Sample::xt).collect()
    }

    pub fn e_i(&self) -> Vec<[T; 2]> {
        self.d_i.iter().map(Sample::xt).collect()
    }

    pub fn collocation(&self) -> Vec<[T; 2]> {
        let mut e = self.e_b();
        e.extend(self.e_i());
        e.extend_from_slice(&self.extra_collocation);
        e
    }
}

/// How labels on a Neumann edge are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeumannLabels {
    /// A slope target `∂u/∂x = h`.
    #[default]
    Slope,
    /// A measured value from the exact solution, as a hard sensor would
    /// report it.
    Value,
    /// Both a slope target and a measured value at every sampled point.
    Both,
}

/// Counts and options for synthetic sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub boundary: usize,
    pub interior: usize,
    pub collocation: usize,
    pub neumann_labels: NeumannLabels,
    /// Standard deviation of additive Gaussian label noise; 0 disables it.
    pub noise_std: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self::heat()
    }
}

impl SamplingConfig {
    /// 130 boundary/initial labels and 20 collocation points.
    pub fn heat() -> Self {
        SamplingConfig {
            boundary: 130,
            interior: 0,
            collocation: 20,
            neumann_labels: NeumannLabels::default(),
            noise_std: 0.0,
        }
    }

    /// Heat draw used by the benchmark runs: the 130 boundary/initial
    /// locations with both a measured value and the slope target on the
    /// Neumann edge, 100 interior labels and 150 collocation points. With
    /// slope targets alone the source is not identifiable from the data.
    pub fn heat_benchmark() -> Self {
        SamplingConfig { interior: 100, collocation: 150, neumann_labels: NeumannLabels::Both, ..Self::heat() }
    }

    /// 170 boundary/initial labels and 40 interior labels.
    pub fn wave() -> Self {
        SamplingConfig { boundary: 170, interior: 40, collocation: 0, ..Self::heat() }
    }

    /// Wave draw used by the benchmark runs: the 170 + 40 labels plus 200
    /// collocation points, without which the residual never constrains
    /// the source away from the labels.
    pub fn wave_benchmark() -> Self {
        SamplingConfig { collocation: 200, ..Self::wave() }
    }

    pub fn for_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Heat1D => Self::heat(),
            ProblemKind::Wave1D => Self::wave(),
        }
    }
}

/// Splits `total` across weights by largest remainder so the parts sum to
/// `total` exactly.
pub fn proportional_split(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        parts[i] += 1;
        rest -= 1;
    }
    parts
}

fn with_noise<T: Scalar>(u: T, noise: Option<&Normal<f64>>, rng: &mut ChaCha8Rng) -> T {
    match noise {
        Some(n) => u + T::lit(n.sample(rng)),
        None => u,
    }
}

/// Draws a synthetic dataset; deterministic in `seed`.
///
/// Boundary/initial points are spread over the `t = 0` edge and the two
/// spatial edges in proportion to their lengths. Labels come from the
/// problem's conditions; interior labels and measured Neumann values need
/// the closed-form solution.
pub fn sample<T: Scalar>(problem: &PdeProblem<T>, cfg: &SamplingConfig, seed: u64) -> Result<Dataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = problem.length.to_f64_lossy();
    let h = problem.horizon.to_f64_lossy();
    let along_x = Uniform::new_inclusive(0.0, l).expect("L > 0");
    let along_t = Uniform::new_inclusive(0.0, h).expect("T > 0");
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let noise = noise.as_ref();

    let split = proportional_split(cfg.boundary, &[l, h, h]);
    let mut d_b = Vec::with_capacity(cfg.boundary);
    for _ in 0..split[0] {
        let x = T::lit(along_x.sample(&mut rng));
        let u = with_noise(problem.initial_value(x), noise, &mut rng);
        d_b.push(Sample::value(x, T::zero(), u));
    }
    for (cond, x, n) in [(problem.left, T::zero(), split[1]), (problem.right, problem.length, split[2])] {
        for _ in 0..n {
            let t = T::lit(along_t.sample(&mut rng));
            match cond {
                EdgeCondition::Dirichlet(v) => {
                    d_b.push(Sample::value(x, t, with_noise(v, noise, &mut rng)));
                }
                EdgeCondition::Neumann(slope) => {
                    let slope_label = Sample { x, t, u: slope, kind: LabelKind::SlopeX };
                    let measured = || -> Result<Sample<T>> { Ok(Sample::value(x, t, problem.exact_u(x, t)?)) };
                    match cfg.neumann_labels {
                        NeumannLabels::Slope => d_b.push(slope_label),
                        NeumannLabels::Value => {
                            let mut s = measured()?;
                            s.u = with_noise(s.u, noise, &mut rng);
                            d_b.push(s);
                        }
                        NeumannLabels::Both => {
                            let mut s = measured()?;
                            s.u = with_noise(s.u, noise, &mut rng);
                            d_b.push(s);
                            d_b.push(slope_label);
                        }
                    }
                }
            }
        }
    }

    // open interior; edge hits have probability zero but are redrawn anyway
    let interior = |rng: &mut ChaCha8Rng| loop {
        let x = along_x.sample(rng);
        let t = along_t.sample(rng);
        if x > 0.0 && x < l && t > 0.0 {
            return (T::lit(x), T::lit(t));
        }
    };
    let mut d_i = Vec::with_capacity(cfg.interior);
    for _ in 0..cfg.interior {
        let (x, t) = interior(&mut rng);
        let u = with_noise(problem.exact_u(x, t)?, noise, &mut rng);
        d_i.push(Sample::value(x, t, u));
    }
    let extra_collocation = (0..cfg.collocation)
        .map(|_| {
            let (x, t) = interior(&mut rng);
            [x, t]
        })
        .collect();
    Ok(Dataset { d_b, d_i, extra_collocation })
}

/// Heat benchmark draw: 130 boundary/initial labels, 20 collocation points.
pub fn sample_heat<T: Scalar>(problem: &PdeProblem<T>, seed: u64) -> Result<Dataset<T>> {
    if problem.kind != ProblemKind::Heat1D {
        return Err(Error::Config("sample_heat needs a heat problem".into()));
    }
    sample(problem, &SamplingConfig::heat(), seed)
}

/// Wave benchmark draw: 170 boundary/initial labels, 40 interior labels.
pub fn sample_wave<T: Scalar>(problem: &PdeProblem<T>, seed: u64) -> Result<Dataset<T>> {
    if problem.kind != ProblemKind::Wave1D {
        return Err(Error::Config("sample_wave needs a wave problem".into()));
    }
    sample(problem, &SamplingConfig::wave(), seed)
}

/// Uniform `(x, t)` lattice over the closed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid<T> {
    pub nx: usize,
    pub nt: usize,
    /// Index `ix * nt + it`.
    pub points: Vec<[T; 2]>,
}

impl<T: Scalar> EvalGrid<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Area of the covered rectangle.
    pub fn measure(&self) -> T {
        let (first, last) = (self.points[0], self.points[self.points.len() - 1]);
        (last[0] - first[0]) * (last[1] - first[1])
    }
}

pub fn make_grid<T: Scalar>(problem: &PdeProblem<T>, nx: usize, nt: usize) -> Result<EvalGrid<T>> {
    make_grid_over(problem.length, problem.horizon, nx, nt)
}

/// Lattice over `[0, length] × [0, horizon]`.
pub fn make_grid_over<T: Scalar>(length: T, horizon: T, nx: usize, nt: usize) -> Result<EvalGrid<T>> {
    if nx < 2 || nt < 2 {
        return Err(Error::Config(format!("grid needs nx, nt >= 2, got {nx}x{nt}")));
    }
    let xs = linspace(T::zero(), length, nx);
    let ts = linspace(T::zero(), horizon, nt);
    let mut points = Vec::with_capacity(nx * nt);
    for &x in &xs {
        for &t in &ts {
            points.push([x, t]);
        }
    }
    Ok(EvalGrid { nx, nt, points })
}

/// `n` evenly spaced values; endpoints are exact.
pub fn linspace<T: Scalar>(a: T, b: T, n: usize) -> Vec<T> {
    let step = (b - a) / T::from_usize_lossy(n - 1);
    (0..n).map(|i| if i == n - 1 { b } else { a + step * T::from_usize_lossy(i) }).collect()
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Config(format!("{}: cannot parse number {s:?}", path.display())))
}

/// Writes `x,t,u` rows.
pub fn write_labeled_csv<T: Scalar>(path: &Path, rows: &[Sample<T>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "t", "u"])?;
    for s in rows {
        w.write_record([fmt_f64(s.x.to_f64_lossy()), fmt_f64(s.t.to_f64_lossy()), fmt_f64(s.u.to_f64_lossy())])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `x,t` rows.
pub fn write_points_csv<T: Scalar>(path: &Path, rows: &[[T; 2]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "t"])?;
    for p in rows {
        w.write_record([fmt_f64(p[0].to_f64_lossy()), fmt_f64(p[1].to_f64_lossy())])?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let got: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got != header {
        return Err(Error::Config(format!("{}: expected header {:?}, found {:?}", path.display(), header, got)));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec.iter().map(|f| parse_f64(f, path)).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_labeled_csv<T: Scalar>(path: &Path, kind: LabelKind) -> Result<Vec<Sample<T>>> {
    Ok(read_rows(path, &["x", "t", "u"])?
        .into_iter()
        .map(|r| Sample { x: T::lit(r[0]), t: T::lit(r[1]), u: T::lit(r[2]), kind })
        .collect())
}

pub fn read_points_csv<T: Scalar>(path: &Path) -> Result<Vec<[T; 2]>> {
    Ok(read_rows(path, &["x", "t"])?.into_iter().map(|r| [T::lit(r[0]), T::lit(r[1])]).collect())
}

pub const D_B_FILE: &str = "d_b.csv";
pub const D_B_SLOPE_FILE: &str = "d_b_slope.csv";
pub const D_I_FILE: &str = "d_i.csv";
pub const COLLOCATION_FILE: &str = "collocation.csv";

impl<T: Scalar> Dataset<T> {
    /// Writes the dataset as CSV files into `dir`.
    ///
    /// Value labels go to `d_b.csv` / `d_i.csv`; Neumann slope targets go to
    /// `d_b_slope.csv` (same `x,t,u` header, `u` holding `∂u/∂x`); unlabeled
    /// points go to `collocation.csv`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (values, slopes): (Vec<_>, Vec<_>) = self.d_b.iter().partition(|s| s.kind == LabelKind::Value);
        write_labeled_csv(&dir.join(D_B_FILE), &values)?;
        write_labeled_csv(&dir.join(D_B_SLOPE_FILE), &slopes)?;
        write_labeled_csv(&dir.join(D_I_FILE), &self.d_i)?;
        write_points_csv(&dir.join(COLLOCATION_FILE), &self.extra_collocation)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let need = |name: &str| {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(Error::Config(format!("missing dataset file {}", p.display())))
            }
        };
        let mut d_b = read_labeled_csv(&need(D_B_FILE)?, LabelKind::Value)?;
        let slope = dir.join(D_B_SLOPE_FILE);
        if slope.exists() {
            d_b.extend(read_labeled_csv(&slope, LabelKind::SlopeX)?);
        }
        let d_i = read_labeled_csv(&need(D_I_FILE)?, LabelKind::Value)?;
        let extra_collocation = read_points_csv(&need(COLLOCATION_FILE)?)?;
        Ok(Dataset { d_b, d_i, extra_collocation })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn split_is_exact() {
        assert_eq!(proportional_split(130, &[PI, 10.0, 10.0]).iter().sum::<usize>(), 130);
        assert_eq!(proportional_split(170, &[PI, 6.0, 6.0]).iter().sum::<usize>(), 170);
        assert_eq!(proportional_split(3, &[1.0, 1.0, 1.0]), vec![1, 1, 1]);
        assert_eq!(proportional_split(0, &[1.0, 2.0]), vec![0, 0]);
    }

    #[test]
    fn heat_counts_and_labels() {
        let p = PdeProblem::<f64>::heat();
        let d = sample_heat(&p, 1).unwrap();
        assert_eq!(d.d_b.len(), 130);
        assert_eq!(d.d_i.len(), 0);
        assert_eq!(d.extra_collocation.len(), 20);
        for s in &d.d_b {
            assert!(p.contains(s.x, s.t));
            if s.t == 0.0 {
                assert_eq!(s.u, (s.x / 2.0).sin());
            }
            if s.x == 0.0 {
                assert_eq!(s.u, 0.0);
            }
            if s.kind == LabelKind::SlopeX {
                assert_eq!(s.x, PI);
                assert_eq!(s.u, 0.0);
            }
        }
        assert_eq!(d, sample_heat(&p, 1).unwrap());
        assert_ne!(d, sample_heat(&p, 2).unwrap());
    }

    #[test]
    fn wave_counts_and_labels() {
        let p = PdeProblem::<f64>::wave();
        let d = sample_wave(&p, 3).unwrap();
        assert_eq!(d.d_b.len(), 170);
        assert_eq!(d.d_i.len(), 40);
        for s in &d.d_b {
            if s.x == 0.0 || s.x == PI {
                assert_eq!(s.u, 0.0);
            }
        }
        for s in &d.d_i {
            assert!(s.x > 0.0 && s.x < PI && s.t > 0.0 && s.t <= 6.0);
            let exact = crate::pde::exact_wave(s.x, s.t);
            assert_eq!(s.u, exact);
        }
        // boundary and interior do not overlap
        for b in &d.d_b {
            assert!(!d.d_i.iter().any(|i| i.x == b.x && i.t == b.t));
        }
        assert_eq!(d.collocation().len(), 210);
    }

    #[test]
    fn kind_guards() {
        assert!(sample_heat(&PdeProblem::<f64>::wave(), 0).is_err());
        assert!(sample_wave(&PdeProblem::<f64>::heat(), 0).is_err());
    }

    #[test]
    fn neumann_label_variants() {
        let p = PdeProblem::<f64>::heat();
        let mut cfg = SamplingConfig::heat();
        cfg.neumann_labels = NeumannLabels::Value;
        let d = sample(&p, &cfg, 5).unwrap();
        assert!(d.d_b.iter().all(|s| s.kind == LabelKind::Value));
        for s in d.d_b.iter().filter(|s| s.x == PI) {
            assert_eq!(s.u, crate::pde::exact_heat(PI, s.t));
        }
        cfg.neumann_labels = NeumannLabels::Both;
        let d = sample(&p, &cfg, 5).unwrap();
        let slopes = d.d_b.iter().filter(|s| s.kind == LabelKind::SlopeX).count();
        assert!(slopes > 0);
        assert_eq!(d.d_b.len(), 130 + slopes);
    }

    #[test]
    fn noise_perturbs_labels() {
        let p = PdeProblem::<f64>::wave();
        let cfg = SamplingConfig { noise_std: 0.1, ..SamplingConfig::wave() };
        let d = sample(&p, &cfg, 3).unwrap();
        assert!(d.d_i.iter().any(|s| s.u != crate::pde::exact_wave(s.x, s.t)));
    }

    #[test]
    fn grid_shape() {
        let p = PdeProblem::<f64>::heat();
        let g = make_grid(&p, 2, 2).unwrap();
        assert_eq!(g.points, vec![[0.0, 0.0], [0.0, 10.0], [PI, 0.0], [PI, 10.0]]);
        let g = make_grid(&p, 5, 3).unwrap();
        assert!((g.points[3][0] - PI / 4.0).abs() < 1e-15);
        assert!(g.points.contains(&[0.0, 0.0]) && g.points.contains(&[PI, 10.0]));
        assert!((g.measure() - 10.0 * PI).abs() < 1e-12);
        assert!(make_grid(&p, 1, 4).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = PdeProblem::<f64>::heat();
        let d = sample_heat(&p, 8).unwrap();
        d.save_dir(dir.path()).unwrap();
        let e = Dataset::<f64>::load_dir(dir.path()).unwrap();
        let mut a = d.d_b.clone();
        let mut b = e.d_b.clone();
        let key = |s: &Sample<f64>| (s.kind == LabelKind::SlopeX, s.x.to_bits(), s.t.to_bits());
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a, b);
        assert_eq!(d.extra_collocation, e.extra_collocation);
        let header = fs::read_to_string(dir.path().join(COLLOCATION_FILE)).unwrap();
        assert!(header.starts_with("x,t\n"));
    }

    #[test]
    fn load_reports_missing_files_and_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Dataset::<f64>::load_dir(dir.path()).is_err());
        fs::write(dir.path().join(D_B_FILE), "a,b,c\n1,2,3\n").unwrap();
        fs::write(dir.path().join(D_I_FILE), "x,t,u\n").unwrap();
        fs::write(dir.path().join(COLLOCATION_FILE), "x,t\n").unwrap();
        assert!(Dataset::<f64>::load_dir(dir.path()).is_err());
    }
}
