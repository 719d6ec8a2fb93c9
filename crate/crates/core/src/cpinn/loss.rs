//! Data loss, physics loss and the per-phase training objectives.

use serde::{Deserialize, Serialize};

use crate::autodiff::{forward_many, jet_forward_many, loss_grad, Jet2, Order, ParamGrad};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::network::MlpParams;
use crate::pde::PdeProblem;
use crate::sampling::{Dataset, LabelKind, Sample};
use crate::scalar::Scalar;

/// `total = mse_dn + mse_pn`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridLossParts<T> {
    pub mse_dn: T,
    pub mse_pn: T,
    pub total: T,
}

impl<T: Scalar> HybridLossParts<T> {
    pub fn new(mse_dn: T, mse_pn: T) -> Self {
        HybridLossParts { mse_dn, mse_pn, total: mse_dn + mse_pn }
    }
}

fn label_error<T: Scalar>(s: &Sample<T>, jet: &Jet2<T>) -> T {
    match s.kind {
        LabelKind::Value => jet.v - s.u,
        LabelKind::SlopeX => jet.dx - s.u,
    }
}

/// Mean squared label error. Slope labels compare against `∂û/∂x`.
pub fn mse_dn<T: Scalar, U: Field<T>>(net_u: &U, dataset: &Dataset<T>) -> Result<T> {
    let n = dataset.num_labeled();
    if n == 0 {
        return Err(Error::Config("data loss needs at least one labeled point".into()));
    }
    let mut acc = T::zero();
    for s in dataset.labeled() {
        let jet = match s.kind {
            LabelKind::Value => Jet2::constant(net_u.value(s.x, s.t)?),
            LabelKind::SlopeX => net_u.jet(s.x, s.t)?,
        };
        let e = label_error(s, &jet);
        acc += e * e;
    }
    Ok(acc / T::from_usize_lossy(n))
}

/// Mean squared residual over the collocation set, with the source
/// network standing in for the unknown source.
pub fn mse_pn<T: Scalar, U: Field<T>, G: Field<T>>(
    net_u: &U,
    net_g: &G,
    dataset: &Dataset<T>,
    problem: &PdeProblem<T>,
) -> Result<T> {
    let points = dataset.collocation();
    if points.is_empty() {
        return Err(Error::Config("physics loss needs at least one collocation point".into()));
    }
    let mut acc = T::zero();
    for [x, t] in &points {
        let r = problem.residual(&net_u.jet(*x, *t)?, net_g.value(*x, *t)?);
        acc += r * r;
    }
    Ok(acc / T::from_usize_lossy(points.len()))
}

pub fn hybrid_loss<T: Scalar, U: Field<T>, G: Field<T>>(
    net_u: &U,
    net_g: &G,
    dataset: &Dataset<T>,
    problem: &PdeProblem<T>,
) -> Result<HybridLossParts<T>> {
    let dn = if dataset.num_labeled() > 0 { mse_dn(net_u, dataset)? } else { T::zero() };
    let pn = if dataset.collocation().is_empty() { T::zero() } else { mse_pn(net_u, net_g, dataset, problem)? };
    Ok(HybridLossParts::new(dn, pn))
}

/// Solution-network objective over precomputed inputs.
///
/// Inputs are full network input vectors, so the same objective trains the
/// plain solution network (`[x, t]`) and the tapped one (`[x, t, taps..]`).
pub struct SolutionObjective<'a, T> {
    pub problem: &'a PdeProblem<T>,
    pub data_inputs: Vec<Vec<T>>,
    pub data_targets: Vec<(T, LabelKind)>,
    pub colloc_inputs: Vec<Vec<T>>,
    /// Frozen source values at the collocation inputs.
    pub g_hat: Vec<T>,
    pub physics_weight: T,
}

impl<'a, T: Scalar> SolutionObjective<'a, T> {
    /// Builds the objective for a two-input solution network with the
    /// source frozen at `net_g`.
    pub fn for_dataset<G: Field<T>>(
        problem: &'a PdeProblem<T>,
        dataset: &Dataset<T>,
        net_g: &G,
        physics_weight: T,
    ) -> Result<Self> {
        let data_inputs = dataset.labeled().map(|s| vec![s.x, s.t]).collect();
        let data_targets = dataset.labeled().map(|s| (s.u, s.kind)).collect();
        let colloc = dataset.collocation();
        let g_hat = colloc.iter().map(|[x, t]| net_g.value(*x, *t)).collect::<Result<Vec<_>>>()?;
        let colloc_inputs = colloc.iter().map(|p| p.to_vec()).collect();
        Ok(SolutionObjective { problem, data_inputs, data_targets, colloc_inputs, g_hat, physics_weight })
    }

    /// Loss parts and gradient of `mse_dn + w · mse_pn`.
    ///
    /// The reported `mse_pn` is unweighted.
    pub fn eval(&self, net: &MlpParams<T>) -> Result<(HybridLossParts<T>, ParamGrad<T>)> {
        let mut grad = ParamGrad::zeros(net.num_params());
        let mut dn = T::zero();
        if !self.data_inputs.is_empty() {
            let inv = T::one() / T::from_usize_lossy(self.data_inputs.len());
            let needs_jets = self.data_targets.iter().any(|(_, k)| *k != LabelKind::Value);
            let order = if needs_jets { Order::Second } else { Order::Value };
            let (l, g) = loss_grad(net, &self.data_inputs, order, |i, jet| {
                let (u, kind) = self.data_targets[i];
                let two_e = T::lit(2.0) * inv;
                match kind {
                    LabelKind::Value => {
                        let e = jet.v - u;
                        (e * e * inv, Jet2::constant(two_e * e))
                    }
                    LabelKind::SlopeX => {
                        let e = jet.dx - u;
                        (e * e * inv, Jet2 { dx: two_e * e, ..Jet2::zero() })
                    }
                }
            })?;
            dn = l;
            grad = g;
        }
        let mut pn = T::zero();
        if !self.colloc_inputs.is_empty() && self.physics_weight != T::zero() {
            let inv = T::one() / T::from_usize_lossy(self.colloc_inputs.len());
            let w = self.physics_weight;
            let (l, g) = loss_grad(net, &self.colloc_inputs, Order::Second, |i, jet| {
                let r = self.problem.residual(jet, self.g_hat[i]);
                (r * r * inv, self.problem.residual_adjoint(T::lit(2.0) * r * inv * w))
            })?;
            pn = l;
            for (a, b) in grad.0.iter_mut().zip(g.0) {
                *a += b;
            }
        }
        Ok((HybridLossParts::new(dn, pn), grad))
    }

    /// Loss value used for optimization.
    pub fn objective_value(&self, parts: &HybridLossParts<T>) -> T {
        parts.mse_dn + self.physics_weight * parts.mse_pn
    }
}

/// Source-network objective: `mean (f̂ − ĝ)²` with `f̂ = û_t + N[û]` from the
/// frozen solution network. The data loss does not depend on the source
/// network and is omitted.
pub struct SourceObjective<T> {
    pub points: Vec<[T; 2]>,
    /// `û_t + N[û]` at each point.
    pub target: Vec<T>,
}

impl<T: Scalar> SourceObjective<T> {
    pub fn new<U: Field<T>>(problem: &PdeProblem<T>, dataset: &Dataset<T>, net_u: &U) -> Result<Self> {
        let points = dataset.collocation();
        let target = points
            .iter()
            .map(|[x, t]| Ok(problem.residual(&net_u.jet(*x, *t)?, T::zero())))
            .collect::<Result<Vec<_>>>()?;
        Ok(SourceObjective { points, target })
    }

    /// Same as [`Self::new`] for a network, evaluated in parallel.
    pub fn for_network(problem: &PdeProblem<T>, dataset: &Dataset<T>, net_u: &MlpParams<T>) -> Result<Self> {
        let points = dataset.collocation();
        let jets = jet_forward_many(net_u, &points)?;
        let target = jets.iter().map(|j| problem.residual(j, T::zero())).collect();
        Ok(SourceObjective { points, target })
    }

    fn inputs<'s>(&'s self, net_g: &MlpParams<T>) -> Vec<&'s [T]> {
        let d = net_g.input_dim().min(2);
        self.points.iter().map(|p| &p[..d]).collect()
    }

    pub fn eval(&self, net_g: &MlpParams<T>) -> Result<(T, ParamGrad<T>)> {
        if self.points.is_empty() {
            return Ok((T::zero(), ParamGrad::zeros(net_g.num_params())));
        }
        let inv = T::one() / T::from_usize_lossy(self.points.len());
        loss_grad(net_g, &self.inputs(net_g), Order::Value, |i, jet| {
            let r = self.target[i] - jet.v;
            (r * r * inv, Jet2::constant(-T::lit(2.0) * r * inv))
        })
    }

    pub fn value(&self, net_g: &MlpParams<T>) -> Result<T> {
        if self.points.is_empty() {
            return Ok(T::zero());
        }
        let g = forward_many(net_g, &self.inputs(net_g))?;
        let n = T::from_usize_lossy(self.points.len());
        Ok(self.target.iter().zip(g).map(|(f, g)| (*f - g) * (*f - g)).sum::<T>() / n)
    }
}
