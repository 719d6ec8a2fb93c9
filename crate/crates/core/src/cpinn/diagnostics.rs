//! Grid estimates of the continuous losses and of the solution and source
//! errors.
//!
//! With a grid of `n` points covering a rectangle of area `A = T·|Ω̄|`,
//! `L̂_DN = A · mean(ê²)` and `L̂_PN = A · mean(f̂²)` are Monte-Carlo
//! estimates of the squared L² norms of the data error and residual, and
//! `L̂_U = (L̂_DN + L̂_PN) / A`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::pde::PdeProblem;
use crate::sampling::EvalGrid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics<T> {
    pub n: usize,
    /// Area of the grid's rectangle.
    pub measure: T,
    pub l_dn: T,
    pub l_pn: T,
    pub l_u: T,
    /// `‖û − u‖`, the L² solution error (`√L̂_DN`).
    pub solution_l2_error: T,
    /// `‖ĝ − g‖` in L².
    pub source_l2_error: T,
    /// Root mean square of `ĝ − g` over the grid points.
    pub source_rms: T,
    /// `‖f̂_N‖` in L², with the true source.
    pub residual_norm: T,
    /// `‖ê_N‖ / ‖f̂_N‖`, a lower estimate of the well-posedness constant.
    pub lipschitz_ratio: T,
}

/// Grid diagnostics of a trained pair against the closed-form problem.
///
/// The residual uses the true source, so `f̂_N = û_t + N[û] − g`.
pub fn diagnostics<T: Scalar, U: Field<T>, G: Field<T>>(
    net_u: &U,
    net_g: &G,
    problem: &PdeProblem<T>,
    grid: &EvalGrid<T>,
) -> Result<Diagnostics<T>> {
    if !problem.has_exact {
        return Err(Error::Unsupported("diagnostics need the closed-form solution"));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty evaluation grid".into()));
    }
    let per_point: Vec<(T, T, T)> = grid
        .points
        .par_iter()
        .map(|&[x, t]| {
            let jet = net_u.jet(x, t)?;
            let e = jet.v - problem.exact_u(x, t)?;
            let g = problem.exact_g(x, t)?;
            let f = problem.residual(&jet, g);
            let gd = net_g.value(x, t)? - g;
            Ok((e * e, f * f, gd * gd))
        })
        .collect::<Result<_>>()?;
    let n = T::from_usize_lossy(per_point.len());
    let (se, sf, sg) =
        per_point.iter().fold((T::zero(), T::zero(), T::zero()), |(a, b, c), (e, f, g)| (a + *e, b + *f, c + *g));
    let measure = grid.measure();
    let l_dn = measure * se / n;
    let l_pn = measure * sf / n;
    let solution_l2_error = l_dn.sqrt();
    let residual_norm = l_pn.sqrt();
    Ok(Diagnostics {
        n: per_point.len(),
        measure,
        l_dn,
        l_pn,
        l_u: (l_dn + l_pn) / measure,
        solution_l2_error,
        source_l2_error: (measure * sg / n).sqrt(),
        source_rms: (sg / n).sqrt(),
        residual_norm,
        lipschitz_ratio: if residual_norm > T::zero() { solution_l2_error / residual_norm } else { T::infinity() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Jet2;
    use crate::field::{ExactSolution, ExactSource, FnField};
    use crate::sampling::{make_grid, make_grid_over};

    #[test]
    fn exact_surrogates_have_zero_error() {
        for p in [PdeProblem::<f64>::heat(), PdeProblem::wave()] {
            let grid = make_grid(&p, 40, 40).unwrap();
            let d = diagnostics(&ExactSolution(&p), &ExactSource(&p), &p, &grid).unwrap();
            assert!(d.solution_l2_error <= 1e-8);
            assert!(d.source_l2_error <= 1e-8);
            assert!(d.residual_norm <= 1e-8);
        }
    }

    #[test]
    fn constant_offset_on_unit_measure() {
        // T·L = 1 with the heat closed form kept: L = π, T = 1/π
        let p =
            PdeProblem::<f64>::heat().with_constants(1.0, std::f64::consts::PI, 1.0 / std::f64::consts::PI).unwrap();
        let grid = make_grid_over(p.length, p.horizon, 21, 21).unwrap();
        assert!((grid.measure() - 1.0).abs() < 1e-15);
        let shifted = FnField(|x: f64, t: f64| Ok(p.exact_jet(x, t)? + Jet2::constant(1.0)));
        let d = diagnostics(&shifted, &ExactSource(&p), &p, &grid).unwrap();
        assert!((d.solution_l2_error - 1.0).abs() < 1e-12);
        assert!((d.l_u - (d.l_dn + d.l_pn) / (p.horizon * p.length)).abs() < 1e-15);
    }

    #[test]
    fn needs_closed_form() {
        let p = PdeProblem::<f64>::heat().with_constants(2.0, 1.0, 1.0).unwrap();
        let grid = make_grid(&p, 3, 3).unwrap();
        let r = diagnostics(&ExactSolution(&p), &ExactSource(&p), &p, &grid);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
