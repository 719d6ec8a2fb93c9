//! RMSE and Pearson correlation between predictions and ground truth.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::PdeProblem;
use crate::sampling::{fmt_f64, linspace, EvalGrid};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult<T> {
    pub scope: String,
    pub n: usize,
    pub rmse: T,
    pub cc: T,
}

fn check_lengths(a: usize, b: usize, min: usize) -> Result<()> {
    if a != b {
        return Err(Error::Structural(format!("length mismatch: {a} predictions vs {b} truths")));
    }
    if a < min {
        return Err(Error::Config(format!("need at least {min} values, got {a}")));
    }
    Ok(())
}

pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_lengths(pred.len(), truth.len(), 1)?;
    let s: T = pred.iter().zip(truth).map(|(p, q)| (*p - *q) * (*p - *q)).sum();
    Ok((s / T::from_usize_lossy(pred.len())).sqrt())
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
}

/// `Cov(p, q) / (σ_p σ_q)`. Constant input is an error.
pub fn pearson_cc<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    check_lengths(pred.len(), truth.len(), 2)?;
    let (mp, mt) = (mean(pred), mean(truth));
    let (mut cov, mut vp, mut vt) = (T::zero(), T::zero(), T::zero());
    for (p, q) in pred.iter().zip(truth) {
        let (dp, dq) = (*p - mp, *q - mt);
        cov += dp * dq;
        vp += dp * dp;
        vt += dq * dq;
    }
    if vp == T::zero() {
        return Err(Error::UndefinedCorrelation("prediction"));
    }
    if vt == T::zero() {
        return Err(Error::UndefinedCorrelation("ground truth"));
    }
    Ok((cov / (vp.sqrt() * vt.sqrt())).max(-T::one()).min(T::one()))
}

/// Average ranks (1-based), ties share their mean rank.
pub fn ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![T::zero(); v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = T::from_usize_lossy(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    pearson_cc(&ranks(a), &ranks(b))
}

pub fn evaluate<T: Scalar>(scope: impl Into<String>, pred: &[T], truth: &[T]) -> Result<EvalResult<T>> {
    Ok(EvalResult { scope: scope.into(), n: pred.len(), rmse: rmse(pred, truth)?, cc: pearson_cc(pred, truth)? })
}

/// Metrics along the line `t = t_fixed` sampled at `nx` points.
///
/// `field` and `exact` are evaluated at each `(x, t_fixed)`.
pub fn snapshot_eval<T, F, E>(
    field: F,
    exact: E,
    problem: &PdeProblem<T>,
    t_fixed: T,
    nx: usize,
) -> Result<EvalResult<T>>
where
    T: Scalar,
    F: Fn(T, T) -> Result<T>,
    E: Fn(T, T) -> Result<T>,
{
    if !problem.contains(T::zero(), t_fixed) {
        return Err(Error::Domain { x: 0.0, t: t_fixed.to_f64_lossy() });
    }
    if nx < 2 {
        return Err(Error::Config("snapshot needs nx >= 2".into()));
    }
    let xs = linspace(T::zero(), problem.length, nx);
    let pred = xs.iter().map(|&x| field(x, t_fixed)).collect::<Result<Vec<_>>>()?;
    let truth = xs.iter().map(|&x| exact(x, t_fixed)).collect::<Result<Vec<_>>>()?;
    evaluate(format!("t={}", t_fixed.to_f64_lossy()), &pred, &truth)
}

/// Metrics over every point of a grid, given predictions in grid order.
pub fn grid_eval<T: Scalar, E>(pred: &[T], exact: E, grid: &EvalGrid<T>) -> Result<EvalResult<T>>
where
    E: Fn(T, T) -> Result<T>,
{
    let truth = grid.points.iter().map(|&[x, t]| exact(x, t)).collect::<Result<Vec<_>>>()?;
    evaluate("full", pred, &truth)
}

/// Writes `scope,n,rmse,cc` rows.
pub fn write_eval_csv<T: Scalar, W: Write>(mut w: W, rows: &[EvalResult<T>]) -> std::io::Result<()> {
    writeln!(w, "scope,n,rmse,cc")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.scope, r.n, fmt_f64(r.rmse.to_f64_lossy()), fmt_f64(r.cc.to_f64_lossy()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::exact_heat;

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(rmse::<f64>(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_cases() {
        let t = [0.3f64, -1.0, 2.5, 4.0, 0.0];
        assert!((pearson_cc(&t, &t).unwrap() - 1.0f64).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson_cc(&neg, &t).unwrap() + 1.0).abs() < 1e-15);
        let aff: Vec<f64> = t.iter().map(|v| 2.0 * v + 5.0).collect();
        assert!((pearson_cc(&aff, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(pearson_cc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson_cc(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson_cc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]).unwrap();
        assert!((r - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn snapshot_of_exact_field() {
        let p = PdeProblem::<f64>::heat();
        let exact = |x, t| Ok(exact_heat(x, t));
        let r = snapshot_eval(exact, exact, &p, 3.0, 101).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!((r.cc - 1.0).abs() < 1e-15);
        assert_eq!(r.n, 101);
        assert!(snapshot_eval(exact, exact, &p, 11.0, 11).is_err());
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &[EvalResult { scope: "full".into(), n: 4, rmse: 0.5, cc: 1.0 }]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "scope,n,rmse,cc\nfull,4,5.0000000000000000e-1,1.0000000000000000e0\n");
    }
}
