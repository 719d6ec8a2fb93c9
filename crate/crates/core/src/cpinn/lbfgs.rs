//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search follows the bracketing/zoom scheme of Nocedal & Wright
//! (Algorithms 3.5 and 3.6) with safeguarded cubic interpolation. A step is
//! only accepted when it lowers the objective, so the loss sequence of
//! accepted iterates is non-increasing.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    /// Maximum number of accepted iterations.
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stop once `‖g‖∞` falls to this value.
    pub grad_tol: f64,
    /// Stop once an accepted step changes the loss by less than this,
    /// relative to `max(1, |f|)`.
    pub tol_change: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_ls_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 500,
            memory: 20,
            grad_tol: 1e-9,
            tol_change: 1e-14,
            c1: 1e-4,
            c2: 0.9,
            max_ls_evals: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    /// Gradient norm reached `grad_tol`.
    GradientTolerance,
    /// Iteration budget used up.
    MaxIterations,
    /// Loss change fell below `tol_change`.
    NoProgress,
    /// No step along the search direction lowered the loss.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult<T> {
    pub params: Vec<T>,
    pub loss: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    /// Loss after every accepted iteration, starting with the initial loss.
    pub history: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// One objective evaluation along the search line.
#[derive(Clone)]
struct Probe<T> {
    step: T,
    f: T,
    g: Vec<T>,
    gtd: T,
}

impl<T: Scalar> Probe<T> {
    fn finite(&self) -> bool {
        self.f.is_finite() && self.gtd.is_finite()
    }
}

/// Minimizer of the cubic through two points with slopes, clamped to
/// `[lo, hi]`; falls back to the midpoint when the cubic has no real
/// minimizer or the data is not finite.
fn cubic_interpolate<T: Scalar>(a: &Probe<T>, b: &Probe<T>, lo: T, hi: T) -> T {
    let mid = (lo + hi) / T::lit(2.0);
    if !a.finite() || !b.finite() || a.step == b.step {
        return mid;
    }
    let three = T::lit(3.0);
    let d1 = a.gtd + b.gtd - three * (a.f - b.f) / (a.step - b.step);
    let d2sq = d1 * d1 - a.gtd * b.gtd;
    if d2sq < T::zero() {
        return mid;
    }
    let d2 = d2sq.sqrt();
    let two = T::lit(2.0);
    let pos = if a.step <= b.step {
        b.step - (b.step - a.step) * ((b.gtd + d2 - d1) / (b.gtd - a.gtd + two * d2))
    } else {
        a.step - (a.step - b.step) * ((a.gtd + d2 - d1) / (a.gtd - b.gtd + two * d2))
    };
    if pos.is_finite() {
        pos.max(lo).min(hi)
    } else {
        mid
    }
}

struct LineSearch<'a, T, F> {
    objective: &'a mut F,
    x: &'a [T],
    dir: &'a [T],
    evals: usize,
    trial: Vec<T>,
}

impl<T, F> LineSearch<'_, T, F>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    fn probe(&mut self, step: T) -> Probe<T> {
        self.evals += 1;
        for ((p, x), d) in self.trial.iter_mut().zip(self.x).zip(self.dir) {
            *p = *x + step * *d;
        }
        match (self.objective)(&self.trial) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let gtd = dot(&g, self.dir);
                Probe { step, f, g, gtd }
            }
            // overflow and NaN act as an infinitely bad point
            _ => Probe { step, f: T::infinity(), g: Vec::new(), gtd: T::nan() },
        }
    }

    /// Returns the accepted probe, or `None` when no decrease was found.
    fn run(&mut self, start: &Probe<T>, step0: T, cfg: &LbfgsConfig) -> Option<Probe<T>> {
        let c1 = T::lit(cfg.c1);
        let c2 = T::lit(cfg.c2);
        let tol_change = T::lit(cfg.tol_change);
        let d_norm = inf_norm(self.dir);
        let (f0, gtd0) = (start.f, start.gtd);
        let max_evals = cfg.max_ls_evals.max(1);

        let mut prev = start.clone();
        let mut cur = self.probe(step0);
        let mut bracket: Option<[Probe<T>; 2]> = None;
        let mut done = false;

        // bracketing phase
        let mut iters = 1;
        loop {
            if !cur.finite() || cur.f > f0 + c1 * cur.step * gtd0 || (iters > 1 && cur.f >= prev.f) {
                bracket = Some([prev.clone(), cur.clone()]);
                break;
            }
            if cur.gtd.abs() <= -c2 * gtd0 {
                done = true;
                break;
            }
            if cur.gtd >= T::zero() {
                bracket = Some([prev.clone(), cur.clone()]);
                break;
            }
            if iters >= max_evals {
                break;
            }
            let lo = cur.step + T::lit(0.01) * (cur.step - prev.step);
            let hi = cur.step * T::lit(10.0);
            let next = cubic_interpolate(&prev, &cur, lo, hi);
            prev = cur;
            cur = self.probe(next);
            iters += 1;
        }
        if done {
            return (cur.f < f0).then_some(cur);
        }
        let Some(mut br) = bracket else {
            // budget exhausted while still expanding
            return (cur.finite() && cur.f < f0).then_some(cur);
        };

        // zoom phase
        let mut low = if br[0].f <= br[1].f { 0 } else { 1 };
        let mut insufficient = false;
        while iters < max_evals {
            let high = 1 - low;
            let (bmin, bmax) = (br[0].step.min(br[1].step), br[0].step.max(br[1].step));
            if (bmax - bmin) * d_norm < tol_change {
                break;
            }
            let mut t = cubic_interpolate(&br[0], &br[1], bmin, bmax);
            let eps = T::lit(0.1) * (bmax - bmin);
            if (bmax - t).min(t - bmin) < eps {
                if insufficient || t >= bmax || t <= bmin {
                    t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                    insufficient = false;
                } else {
                    insufficient = true;
                }
            } else {
                insufficient = false;
            }
            let p = self.probe(t);
            iters += 1;
            if !p.finite() || p.f > f0 + c1 * t * gtd0 || p.f >= br[low].f {
                br[high] = p;
                low = if br[0].f <= br[1].f { 0 } else { 1 };
            } else {
                if p.gtd.abs() <= -c2 * gtd0 {
                    done = true;
                } else if p.gtd * (br[high].step - br[low].step) >= T::zero() {
                    br[high] = br[low].clone();
                }
                br[low] = p;
            }
            if done {
                break;
            }
        }
        let best = br[low].clone();
        (best.step > T::zero() && best.f < f0 && !best.g.is_empty()).then_some(best)
    }
}

/// Minimizes `objective` starting from `x0`.
///
/// `objective` returns the loss and its gradient. A non-finite value at
/// `x0` is an error; non-finite values during the line search are treated
/// as rejected trial steps.
pub fn lbfgs_minimize<T, F>(mut objective: F, x0: Vec<T>, cfg: &LbfgsConfig) -> Result<LbfgsResult<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    let n = x0.len();
    let (mut f, mut g) = objective(&x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("initial objective evaluation"));
    }
    if g.len() != n {
        return Err(Error::Structural(format!("gradient has {} entries for {n} parameters", g.len())));
    }
    let mut x = x0;
    let mut evaluations = 1;
    let mut history = vec![f];
    let grad_tol = T::lit(cfg.grad_tol);
    let tol_change = T::lit(cfg.tol_change);
    let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    if inf_norm(&g) <= grad_tol {
        status = LbfgsStatus::GradientTolerance;
    } else {
        while iterations < cfg.max_iters {
            // two-loop recursion
            let mut dir: Vec<T> = g.iter().map(|v| -*v).collect();
            let mut alphas = Vec::with_capacity(pairs.len());
            for (s, y, rho) in pairs.iter().rev() {
                let a = *rho * dot(s, &dir);
                for (d, yi) in dir.iter_mut().zip(y) {
                    *d -= a * *yi;
                }
                alphas.push(a);
            }
            if let Some((s, y, _)) = pairs.back() {
                let gamma = dot(s, y) / dot(y, y);
                for d in dir.iter_mut() {
                    *d *= gamma;
                }
            }
            for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                let b = *rho * dot(y, &dir);
                for (d, si) in dir.iter_mut().zip(s) {
                    *d += *si * (*a - b);
                }
            }
            let mut gtd = dot(&g, &dir);
            if !(gtd < T::zero()) {
                // curvature information went stale; restart from steepest descent
                pairs.clear();
                dir = g.iter().map(|v| -*v).collect();
                gtd = dot(&g, &dir);
            }
            let step0 = if pairs.is_empty() {
                let g1: T = g.iter().map(|v| v.abs()).sum();
                T::one().min(T::one() / g1)
            } else {
                T::one()
            };
            let start = Probe { step: T::zero(), f, g: g.clone(), gtd };
            let mut ls =
                LineSearch { objective: &mut objective, x: &x, dir: &dir, evals: 0, trial: vec![T::zero(); n] };
            let accepted = ls.run(&start, step0, cfg);
            evaluations += ls.evals;
            let Some(p) = accepted else {
                status = LbfgsStatus::LineSearchFailed;
                break;
            };
            iterations += 1;
            let s: Vec<T> = dir.iter().map(|d| *d * p.step).collect();
            let y: Vec<T> = p.g.iter().zip(&g).map(|(a, b)| *a - *b).collect();
            let ys = dot(&y, &s);
            if ys > T::lit(1e-10) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && ys > T::zero() {
                if pairs.len() == cfg.memory {
                    pairs.pop_front();
                }
                if cfg.memory > 0 {
                    pairs.push_back((s.clone(), y, T::one() / ys));
                }
            }
            for (xi, si) in x.iter_mut().zip(&s) {
                *xi += *si;
            }
            let df = f - p.f;
            f = p.f;
            g = p.g;
            history.push(f);
            if inf_norm(&g) <= grad_tol {
                status = LbfgsStatus::GradientTolerance;
                break;
            }
            if df.abs() <= tol_change * T::one().max(f.abs()) || inf_norm(&s) <= tol_change {
                status = LbfgsStatus::NoProgress;
                break;
            }
        }
    }
    Ok(LbfgsResult { grad_norm: inf_norm(&g), params: x, loss: f, iterations, evaluations, status, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_one_dimensional() {
        let r = lbfgs_minimize(
            |x: &[f64]| Ok(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)])),
            vec![0.0],
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-8, "{:?}", r.params);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let cfg = LbfgsConfig { max_iters: 200, ..LbfgsConfig::default() };
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert!(r.iterations <= 200);
        assert!(
            (r.params[0] - 1.0).abs() <= 1e-5 && (r.params[1] - 1.0).abs() <= 1e-5,
            "{:?} {:?}",
            r.params,
            r.status
        );
    }

    #[test]
    fn history_is_non_increasing() {
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.history.len(), r.iterations + 1);
    }

    #[test]
    fn stationary_start_is_returned_unchanged() {
        let r =
            lbfgs_minimize(|_x: &[f64]| Ok((2.0, vec![0.0, 0.0])), vec![0.5, -0.5], &LbfgsConfig::default()).unwrap();
        assert_eq!(r.params, vec![0.5, -0.5]);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, LbfgsStatus::GradientTolerance);
    }

    #[test]
    fn zero_budget_returns_init() {
        let cfg = LbfgsConfig { max_iters: 0, ..LbfgsConfig::default() };
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert_eq!(r.params, vec![-1.2, 1.0]);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = lbfgs_minimize(|_x: &[f64]| Ok((f64::NAN, vec![0.0])), vec![0.0], &LbfgsConfig::default());
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }

    #[test]
    fn overflow_region_is_avoided() {
        // finite only for x < 1
        let f = |x: &[f64]| {
            if x[0] >= 1.0 {
                Ok((f64::INFINITY, vec![f64::NAN]))
            } else {
                Ok(((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)]))
            }
        };
        let r = lbfgs_minimize(f, vec![-5.0], &LbfgsConfig::default()).unwrap();
        assert!((r.params[0] - 0.9).abs() < 1e-6, "{:?}", r);
    }

    #[test]
    fn single_precision() {
        let r = lbfgs_minimize(
            |x: &[f32]| Ok(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)])),
            vec![0.0f32, 0.0],
            &LbfgsConfig { grad_tol: 1e-5, tol_change: 1e-7, ..LbfgsConfig::default() },
        )
        .unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-3);
    }
}
