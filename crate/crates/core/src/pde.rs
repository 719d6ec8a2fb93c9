//! Benchmark problems and the nonhomogeneous residual.
//!
//! Both benchmarks live on `(0, L) × (0, T]` with `L = π`, `a = 1`:
//!
//! * `Heat1D`: `u_t = a² u_xx + g(x)`, `u(x,0) = sin(x/2)`, `u(0,t) = 0`,
//!   `u_x(L,t) = 0`, `g(x) = sin(x/2)`, `T = 10`.
//! * `Wave1D`: `u_tt = a² u_xx + g(x,t)`, `u(x,0) = u_t(x,0) = 0`,
//!   `u(0,t) = u(L,t) = 0`, `g = sin(2πx/L) sin(2aπt/L)`, `T = 6`.
//!
//! Both sources excite a single eigenmode, so the exact solutions are
//! closed-form products of a spatial mode and a scalar ODE solution.

use serde::{Deserialize, Serialize};

use crate::autodiff::Jet2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "heat")]
    Heat1D,
    #[serde(rename = "wave")]
    Wave1D,
}

/// Condition on one spatial edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeCondition<T> {
    /// Prescribed value.
    Dirichlet(T),
    /// Prescribed `∂u/∂x`.
    Neumann(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem<T> {
    pub kind: ProblemKind,
    /// Diffusivity (heat) or wave speed.
    pub a: T,
    pub length: T,
    pub horizon: T,
    pub left: EdgeCondition<T>,
    pub right: EdgeCondition<T>,
    /// Whether the closed-form solution and source are available. Only the
    /// benchmark constants (`a = 1`, `L = π`) admit them.
    pub has_exact: bool,
}

impl<T: Scalar> PdeProblem<T> {
    pub fn heat() -> Self {
        PdeProblem {
            kind: ProblemKind::Heat1D,
            a: T::one(),
            length: T::PI(),
            horizon: T::lit(10.0),
            left: EdgeCondition::Dirichlet(T::zero()),
            right: EdgeCondition::Neumann(T::zero()),
            has_exact: true,
        }
    }

    pub fn wave() -> Self {
        PdeProblem {
            kind: ProblemKind::Wave1D,
            a: T::one(),
            length: T::PI(),
            horizon: T::lit(6.0),
            left: EdgeCondition::Dirichlet(T::zero()),
            right: EdgeCondition::Dirichlet(T::zero()),
            has_exact: true,
        }
    }

    pub fn of_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Heat1D => Self::heat(),
            ProblemKind::Wave1D => Self::wave(),
        }
    }

    /// Overrides the constants; the closed forms stay available only when
    /// they still match the benchmark.
    pub fn with_constants(mut self, a: T, length: T, horizon: T) -> Result<Self> {
        if !(length > T::zero()) || !(horizon > T::zero()) || !(a > T::zero()) {
            return Err(Error::Config("a, L and T must be positive".into()));
        }
        let tol = T::lit(1e-12);
        self.has_exact = (a - T::one()).abs() < tol && (length - T::PI()).abs() < tol;
        self.a = a;
        self.length = length;
        self.horizon = horizon;
        Ok(self)
    }

    pub fn contains(&self, x: T, t: T) -> bool {
        let tol = T::lit(1e-12);
        x >= -tol && x <= self.length + tol && t >= -tol && t <= self.horizon + tol
    }

    fn check(&self, x: T, t: T) -> Result<()> {
        if self.contains(x, t) {
            Ok(())
        } else {
            Err(Error::Domain { x: x.to_f64_lossy(), t: t.to_f64_lossy() })
        }
    }

    /// `φ(x) = u(x, 0)`.
    pub fn initial_value(&self, x: T) -> T {
        match self.kind {
            ProblemKind::Heat1D => (x / T::lit(2.0)).sin(),
            ProblemKind::Wave1D => T::zero(),
        }
    }

    /// `u_t(x, 0)`; only meaningful for the wave problem.
    pub fn initial_velocity(&self, _x: T) -> T {
        T::zero()
    }

    /// `u_t + N[u] - g` with `N[u] = -a² u_xx`.
    pub fn residual(&self, jet: &Jet2<T>, g_hat: T) -> T {
        let a2 = self.a * self.a;
        match self.kind {
            ProblemKind::Heat1D => jet.dt - a2 * jet.dxx - g_hat,
            ProblemKind::Wave1D => jet.dtt - a2 * jet.dxx - g_hat,
        }
    }

    /// Adjoint of [`Self::residual`] with respect to the jet slots, scaled by
    /// `w`.
    pub fn residual_adjoint(&self, w: T) -> Jet2<T> {
        let a2 = self.a * self.a;
        let mut j = Jet2::zero();
        j.dxx = -a2 * w;
        match self.kind {
            ProblemKind::Heat1D => j.dt = w,
            ProblemKind::Wave1D => j.dtt = w,
        }
        j
    }

    fn require_exact(&self) -> Result<()> {
        if self.has_exact {
            Ok(())
        } else {
            Err(Error::Unsupported("no closed-form solution for these constants"))
        }
    }

    pub fn exact_u(&self, x: T, t: T) -> Result<T> {
        self.require_exact()?;
        self.check(x, t)?;
        Ok(match self.kind {
            ProblemKind::Heat1D => exact_heat(x, t),
            ProblemKind::Wave1D => exact_wave(x, t),
        })
    }

    pub fn exact_g(&self, x: T, t: T) -> Result<T> {
        self.require_exact()?;
        self.check(x, t)?;
        Ok(match self.kind {
            ProblemKind::Heat1D => exact_source_heat(x),
            ProblemKind::Wave1D => exact_source_wave(x, t),
        })
    }

    /// Jet of the exact solution, for oracle checks.
    pub fn exact_jet(&self, x: T, t: T) -> Result<Jet2<T>> {
        self.require_exact()?;
        self.check(x, t)?;
        let xj = Jet2::var_x(x);
        let tj = Jet2::var_t(t);
        Ok(match self.kind {
            ProblemKind::Heat1D => {
                let half = T::lit(0.5);
                let amp = Jet2::constant(T::lit(4.0)) - (tj.scale(-T::lit(0.25))).exp().scale(T::lit(3.0));
                amp * xj.scale(half).sin()
            }
            ProblemKind::Wave1D => {
                let two = T::lit(2.0);
                let amp = tj.scale(two).sin().scale(T::lit(0.125)) - tj.scale(T::lit(0.25)) * tj.scale(two).cos();
                amp * xj.scale(two).sin()
            }
        })
    }
}

/// `(4 - 3 e^{-t/4}) sin(x/2)`: the mode amplitude solves `c' = -c/4 + 1`,
/// `c(0) = 1`.
pub fn exact_heat<T: Scalar>(x: T, t: T) -> T {
    (T::lit(4.0) - T::lit(3.0) * (-t / T::lit(4.0)).exp()) * (x / T::lit(2.0)).sin()
}

pub fn exact_source_heat<T: Scalar>(x: T) -> T {
    (x / T::lit(2.0)).sin()
}

/// `[sin(2t)/8 - t cos(2t)/4] sin(2x)`: resonant forcing of the n = 2 mode,
/// `c'' + 4c = sin 2t`, `c(0) = c'(0) = 0`.
pub fn exact_wave<T: Scalar>(x: T, t: T) -> T {
    let two = T::lit(2.0);
    ((two * t).sin() / T::lit(8.0) - t * (two * t).cos() / T::lit(4.0)) * (two * x).sin()
}

pub fn exact_source_wave<T: Scalar>(x: T, t: T) -> T {
    let two = T::lit(2.0);
    (two * x).sin() * (two * t).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn heat_conditions() {
        for t in [0.0, 0.5, 3.0, 10.0] {
            assert_eq!(exact_heat(0.0, t), 0.0);
            let p = PdeProblem::<f64>::heat();
            let j = p.exact_jet(PI, t).unwrap();
            assert!(j.dx.abs() < 1e-15);
        }
        for x in [0.0, 1.0, 2.5, PI] {
            assert!((exact_heat(x, 0.0) - (x / 2.0).sin()).abs() < 1e-15);
        }
        assert_eq!(exact_source_heat(PI), 1.0);
    }

    #[test]
    fn wave_conditions() {
        let p = PdeProblem::<f64>::wave();
        for x in [0.0, 0.4, 1.3, 2.9, PI] {
            assert_eq!(exact_wave(x, 0.0), 0.0);
            assert!(p.exact_jet(x, 0.0).unwrap().dt.abs() < 1e-15);
        }
        for t in [0.0, 1.0, 3.3, 6.0] {
            assert_eq!(exact_wave(0.0, t), 0.0);
            assert!(exact_wave(PI, t).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_jet_matches_closed_form() {
        for p in [PdeProblem::<f64>::heat(), PdeProblem::wave()] {
            let j = p.exact_jet(1.1, 2.2).unwrap();
            assert!((j.v - p.exact_u(1.1, 2.2).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_arithmetic() {
        let p = PdeProblem::<f64>::heat();
        let j = Jet2 { dt: 1.0, ..Jet2::zero() };
        assert_eq!(p.residual(&j, 0.0), 1.0);
        assert_eq!(p.residual(&Jet2::zero(), 0.0), 0.0);
        let w = PdeProblem::<f64>::wave();
        let j = Jet2 { dtt: 2.0, dxx: 0.5, dt: 9.0, ..Jet2::zero() };
        assert_eq!(w.residual(&j, 1.0), 0.5);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let p = PdeProblem::<f64>::heat();
        assert!(matches!(p.exact_u(-0.1, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(p.exact_u(1.0, 10.5), Err(Error::Domain { .. })));
        let w = PdeProblem::<f64>::wave();
        assert!(w.exact_g(1.0, 6.5).is_err());
    }

    #[test]
    fn non_benchmark_constants_drop_closed_form() {
        let p = PdeProblem::<f64>::heat().with_constants(2.0, PI, 10.0).unwrap();
        assert!(matches!(p.exact_u(1.0, 1.0), Err(Error::Unsupported(_))));
        assert!(PdeProblem::<f64>::heat().with_constants(1.0, -1.0, 1.0).is_err());
    }
}
