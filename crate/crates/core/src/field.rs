//! Anything that can be queried as a scalar field over `(x, t)`.
//!
//! Loss and diagnostic routines accept any [`Field`], which lets tests swap
//! a trained network for the closed-form solution.

use crate::autodiff::{jet_forward, jet_forward_xt, Jet2};
use crate::error::Result;
use crate::network::MlpParams;
use crate::pde::PdeProblem;
use crate::scalar::Scalar;

pub trait Field<T: Scalar>: Sync {
    fn value(&self, x: T, t: T) -> Result<T>;

    /// Value and partials; the default has no derivative information.
    fn jet(&self, x: T, t: T) -> Result<Jet2<T>> {
        Ok(Jet2::constant(self.value(x, t)?))
    }
}

/// Two-input networks read `(x, t)`; one-input networks read `x` only.
impl<T: Scalar> Field<T> for MlpParams<T> {
    fn value(&self, x: T, t: T) -> Result<T> {
        if self.input_dim() == 1 {
            self.forward(&[x])
        } else {
            self.forward(&[x, t])
        }
    }

    fn jet(&self, x: T, t: T) -> Result<Jet2<T>> {
        if self.input_dim() == 1 {
            jet_forward(self, &[x])
        } else {
            jet_forward_xt(self, x, t)
        }
    }
}

/// Closed-form solution of a benchmark.
pub struct ExactSolution<'a, T>(pub &'a PdeProblem<T>);

impl<T: Scalar> Field<T> for ExactSolution<'_, T> {
    fn value(&self, x: T, t: T) -> Result<T> {
        self.0.exact_u(x, t)
    }

    fn jet(&self, x: T, t: T) -> Result<Jet2<T>> {
        self.0.exact_jet(x, t)
    }
}

/// Closed-form source of a benchmark.
pub struct ExactSource<'a, T>(pub &'a PdeProblem<T>);

impl<T: Scalar> Field<T> for ExactSource<'_, T> {
    fn value(&self, x: T, t: T) -> Result<T> {
        self.0.exact_g(x, t)
    }
}

/// The zero field.
pub struct Zero;

impl<T: Scalar> Field<T> for Zero {
    fn value(&self, _x: T, _t: T) -> Result<T> {
        Ok(T::zero())
    }
}

/// Wraps a closure returning jets.
pub struct FnField<F>(pub F);

impl<T, F> Field<T> for FnField<F>
where
    T: Scalar,
    F: Fn(T, T) -> Result<Jet2<T>> + Sync,
{
    fn value(&self, x: T, t: T) -> Result<T> {
        Ok((self.0)(x, t)?.v)
    }

    fn jet(&self, x: T, t: T) -> Result<Jet2<T>> {
        (self.0)(x, t)
    }
}
