//! Exact input derivatives of network outputs and parameter gradients of
//! losses built from them.
//!
//! Input derivatives up to second order in `(x, t)` are propagated forward
//! as [`Jet2`] values. Parameter gradients are obtained by a reverse sweep
//! over the jet-augmented forward pass: each point records its own small
//! tape, and the per-point gradients are summed in a fixed pairwise order so
//! results do not depend on how many worker threads ran.

use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::MlpParams;
use crate::scalar::Scalar;

/// Value of a scalar field with its first and second partials in `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2<T> {
    pub v: T,
    pub dx: T,
    pub dt: T,
    pub dxx: T,
    pub dtt: T,
    pub dxt: T,
}

impl<T: Scalar> Jet2<T> {
    pub fn constant(v: T) -> Self {
        Jet2 { v, ..Self::zero() }
    }

    pub fn zero() -> Self {
        let z = T::zero();
        Jet2 { v: z, dx: z, dt: z, dxx: z, dtt: z, dxt: z }
    }

    /// The coordinate `x` itself.
    pub fn var_x(x: T) -> Self {
        Jet2 { v: x, dx: T::one(), ..Self::zero() }
    }

    /// The coordinate `t` itself.
    pub fn var_t(t: T) -> Self {
        Jet2 { v: t, dt: T::one(), ..Self::zero() }
    }

    pub fn scale(self, k: T) -> Self {
        Jet2 {
            v: self.v * k,
            dx: self.dx * k,
            dt: self.dt * k,
            dxx: self.dxx * k,
            dtt: self.dtt * k,
            dxt: self.dxt * k,
        }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    pub fn chain(self, f: T, f1: T, f2: T) -> Self {
        Jet2 {
            v: f,
            dx: f1 * self.dx,
            dt: f1 * self.dt,
            dxx: f1 * self.dxx + f2 * self.dx * self.dx,
            dtt: f1 * self.dtt + f2 * self.dt * self.dt,
            dxt: f1 * self.dxt + f2 * self.dx * self.dt,
        }
    }

    pub fn tanh(self) -> Self {
        let s = self.v.tanh();
        let s1 = T::one() - s * s;
        self.chain(s, s1, -(s + s) * s1)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn is_finite(&self) -> bool {
        self.slots().iter().all(|s| s.is_finite())
    }

    /// `[v, dx, dt, dxx, dtt, dxt]`.
    pub fn slots(&self) -> [T; 6] {
        [self.v, self.dx, self.dt, self.dxx, self.dtt, self.dxt]
    }
}

impl<T: Scalar> Add for Jet2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Jet2 {
            v: self.v + o.v,
            dx: self.dx + o.dx,
            dt: self.dt + o.dt,
            dxx: self.dxx + o.dxx,
            dtt: self.dtt + o.dtt,
            dxt: self.dxt + o.dxt,
        }
    }
}

impl<T: Scalar> Sub for Jet2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<T: Scalar> Neg for Jet2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Mul for Jet2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Jet2 {
            v: self.v * o.v,
            dx: self.dx * o.v + self.v * o.dx,
            dt: self.dt * o.v + self.v * o.dt,
            dxx: self.dxx * o.v + (self.dx * o.dx + self.dx * o.dx) + self.v * o.dxx,
            dtt: self.dtt * o.v + (self.dt * o.dt + self.dt * o.dt) + self.v * o.dtt,
            dxt: self.dxt * o.v + self.dx * o.dt + self.dt * o.dx + self.v * o.dxt,
        }
    }
}

/// Gradient of a scalar loss w.r.t. every network parameter, in the flat
/// layout of [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T>(pub Vec<T>);

impl<T: Scalar> ParamGrad<T> {
    pub fn zeros(n: usize) -> Self {
        ParamGrad(vec![T::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }
}

fn input_jets<T: Scalar>(input: &[T]) -> Vec<Jet2<T>> {
    input
        .iter()
        .enumerate()
        .map(|(i, &v)| match i {
            0 => Jet2::var_x(v),
            1 => Jet2::var_t(v),
            _ => Jet2::constant(v),
        })
        .collect()
}

/// Output jet of the network at `input = [x, t, taps..]`.
///
/// Inputs beyond the first two are treated as constants.
pub fn jet_forward<T: Scalar>(params: &MlpParams<T>, input: &[T]) -> Result<Jet2<T>> {
    params.check_input(input.len())?;
    Ok(JetTape::record(params, input).output())
}

/// Convenience wrapper for two-input networks.
pub fn jet_forward_xt<T: Scalar>(params: &MlpParams<T>, x: T, t: T) -> Result<Jet2<T>> {
    jet_forward(params, &[x, t])
}

/// Forward record of one point: layer inputs and pre-activations as jets.
struct JetTape<T> {
    // acts[l] is the input of layer l; the last entry is the output layer's
    // pre-activation (linear output).
    acts: Vec<Vec<Jet2<T>>>,
    pre: Vec<Vec<Jet2<T>>>,
}

impl<T: Scalar> JetTape<T> {
    fn record(params: &MlpParams<T>, input: &[T]) -> Self {
        let flat = params.as_flat();
        let layout = params.layout();
        let last = layout.len() - 1;
        let mut acts = Vec::with_capacity(layout.len() + 1);
        let mut pre = Vec::with_capacity(layout.len());
        acts.push(input_jets(input));
        for (l, lay) in layout.iter().enumerate() {
            let a = &acts[l];
            let mut z = Vec::with_capacity(lay.fan_out);
            for r in 0..lay.fan_out {
                let row = &flat[lay.weights + r * lay.fan_in..lay.weights + (r + 1) * lay.fan_in];
                let mut acc = Jet2::zero();
                for (w, aj) in row.iter().zip(a) {
                    acc.v += *w * aj.v;
                    acc.dx += *w * aj.dx;
                    acc.dt += *w * aj.dt;
                    acc.dxx += *w * aj.dxx;
                    acc.dtt += *w * aj.dtt;
                    acc.dxt += *w * aj.dxt;
                }
                acc.v += flat[lay.biases + r];
                z.push(acc);
            }
            let next = if l == last { z.clone() } else { z.iter().map(|j| j.tanh()).collect() };
            pre.push(z);
            acts.push(next);
        }
        JetTape { acts, pre }
    }

    fn output(&self) -> Jet2<T> {
        self.acts.last().unwrap()[0]
    }

    /// Accumulates d(loss)/d(params) into `grad`, given the loss adjoint of
    /// each slot of the output jet.
    fn backward(&self, params: &MlpParams<T>, seed: Jet2<T>, grad: &mut [T]) {
        let flat = params.as_flat();
        let layout = params.layout();
        let last = layout.len() - 1;
        let mut zbar = vec![seed];
        for l in (0..layout.len()).rev() {
            let lay = layout[l];
            let a = &self.acts[l];
            for (r, zb) in zbar.iter().enumerate() {
                let wrow = lay.weights + r * lay.fan_in;
                for (c, aj) in a.iter().enumerate() {
                    grad[wrow + c] += zb.v * aj.v
                        + zb.dx * aj.dx
                        + zb.dt * aj.dt
                        + zb.dxx * aj.dxx
                        + zb.dtt * aj.dtt
                        + zb.dxt * aj.dxt;
                }
                grad[lay.biases + r] += zb.v;
            }
            if l == 0 {
                break;
            }
            // adjoint of this layer's input = W^T zbar, slot by slot
            let mut abar = vec![Jet2::zero(); lay.fan_in];
            for (r, zb) in zbar.iter().enumerate() {
                let row = &flat[lay.weights + r * lay.fan_in..lay.weights + (r + 1) * lay.fan_in];
                for (ab, w) in abar.iter_mut().zip(row) {
                    *ab = *ab + zb.scale(*w);
                }
            }
            // through tanh of layer l-1 (never the linear output layer)
            debug_assert!(l - 1 < last);
            zbar = self.pre[l - 1].iter().zip(&abar).map(|(z, ab)| tanh_adjoint(z, ab)).collect();
        }
    }
}

/// Pulls the adjoint of `tanh(z)` back onto `z`.
fn tanh_adjoint<T: Scalar>(z: &Jet2<T>, ab: &Jet2<T>) -> Jet2<T> {
    let two = T::lit(2.0);
    let s = z.v.tanh();
    let s1 = T::one() - s * s;
    let s2 = -two * s * s1;
    let s3 = -two * (s1 * s1 + s * s2);
    Jet2 {
        v: ab.v * s1
            + s2 * (ab.dx * z.dx + ab.dt * z.dt + ab.dxx * z.dxx + ab.dtt * z.dtt + ab.dxt * z.dxt)
            + s3 * (ab.dxx * z.dx * z.dx + ab.dtt * z.dt * z.dt + ab.dxt * z.dx * z.dt),
        dx: ab.dx * s1 + s2 * (two * ab.dxx * z.dx + ab.dxt * z.dt),
        dt: ab.dt * s1 + s2 * (two * ab.dtt * z.dt + ab.dxt * z.dx),
        dxx: ab.dxx * s1,
        dtt: ab.dtt * s1,
        dxt: ab.dxt * s1,
    }
}

/// Reverse sweep for value-only losses; cheaper than the jet tape.
struct ValueTape<T> {
    acts: Vec<Vec<T>>,
}

impl<T: Scalar> ValueTape<T> {
    fn record(params: &MlpParams<T>, input: &[T]) -> Self {
        let flat = params.as_flat();
        let layout = params.layout();
        let last = layout.len() - 1;
        let mut acts = Vec::with_capacity(layout.len() + 1);
        acts.push(input.to_vec());
        for (l, lay) in layout.iter().enumerate() {
            let a = &acts[l];
            let mut next = Vec::with_capacity(lay.fan_out);
            for r in 0..lay.fan_out {
                let row = &flat[lay.weights + r * lay.fan_in..lay.weights + (r + 1) * lay.fan_in];
                let mut z = T::zero();
                for (w, aj) in row.iter().zip(a) {
                    z += *w * *aj;
                }
                z += flat[lay.biases + r];
                next.push(if l == last { z } else { z.tanh() });
            }
            acts.push(next);
        }
        ValueTape { acts }
    }

    fn output(&self) -> T {
        self.acts.last().unwrap()[0]
    }

    fn backward(&self, params: &MlpParams<T>, seed: T, grad: &mut [T]) {
        let flat = params.as_flat();
        let layout = params.layout();
        let mut zbar = vec![seed];
        for l in (0..layout.len()).rev() {
            let lay = layout[l];
            let a = &self.acts[l];
            for (r, &zb) in zbar.iter().enumerate() {
                let wrow = lay.weights + r * lay.fan_in;
                for (c, &aj) in a.iter().enumerate() {
                    grad[wrow + c] += zb * aj;
                }
                grad[lay.biases + r] += zb;
            }
            if l == 0 {
                break;
            }
            let mut abar = vec![T::zero(); lay.fan_in];
            for (r, &zb) in zbar.iter().enumerate() {
                let row = &flat[lay.weights + r * lay.fan_in..lay.weights + (r + 1) * lay.fan_in];
                for (ab, &w) in abar.iter_mut().zip(row) {
                    *ab += zb * w;
                }
            }
            // self.acts[l] = tanh(pre) for hidden layers, so tanh' = 1 - a^2
            zbar = abar.iter().zip(a).map(|(&ab, &h)| ab * (T::one() - h * h)).collect();
        }
    }
}

/// Which derivatives a loss needs from the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// Output value only; jets passed to the loss carry zero derivatives.
    Value,
    /// Value and all first and second partials in `(x, t)`.
    Second,
}

/// Points per work unit. Fixed so the reduction tree never depends on the
/// number of threads.
const CHUNK: usize = 8;

/// Value and parameter gradient of `Σ_i loss_i(jet_i)`.
///
/// `inputs[i]` is the network input at point `i`; `point_loss(i, jet)`
/// returns that point's loss contribution and its partial derivatives with
/// respect to each jet slot.
pub fn loss_grad<T, I, F>(params: &MlpParams<T>, inputs: &[I], order: Order, point_loss: F) -> Result<(T, ParamGrad<T>)>
where
    T: Scalar,
    I: AsRef<[T]> + Sync,
    F: Fn(usize, &Jet2<T>) -> (T, Jet2<T>) + Sync,
{
    for inp in inputs {
        params.check_input(inp.as_ref().len())?;
    }
    let n_params = params.num_params();
    let chunk_results: Vec<Result<(T, ParamGrad<T>)>> = inputs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut loss = T::zero();
            let mut grad = ParamGrad::zeros(n_params);
            for (k, inp) in chunk.iter().enumerate() {
                let i = ci * CHUNK + k;
                let (li, seed) = match order {
                    Order::Second => {
                        let tape = JetTape::record(params, inp.as_ref());
                        let jet = tape.output();
                        if !jet.is_finite() {
                            return Err(Error::numeric(format!("forward pass at point {i}")));
                        }
                        let (li, seed) = point_loss(i, &jet);
                        if !li.is_finite() || !seed.is_finite() {
                            return Err(Error::numeric(format!("loss at point {i}")));
                        }
                        tape.backward(params, seed, &mut grad.0);
                        (li, seed)
                    }
                    Order::Value => {
                        let tape = ValueTape::record(params, inp.as_ref());
                        let y = tape.output();
                        if !y.is_finite() {
                            return Err(Error::numeric(format!("forward pass at point {i}")));
                        }
                        let (li, seed) = point_loss(i, &Jet2::constant(y));
                        if !li.is_finite() || !seed.v.is_finite() {
                            return Err(Error::numeric(format!("loss at point {i}")));
                        }
                        tape.backward(params, seed.v, &mut grad.0);
                        (li, seed)
                    }
                };
                let _ = seed;
                loss += li;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut parts = chunk_results.into_iter().collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Ok((T::zero(), ParamGrad::zeros(n_params)));
    }
    // pairwise tree reduction in index order
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((la, mut ga)) = it.next() {
            if let Some((lb, gb)) = it.next() {
                ga.add_assign(&gb);
                next.push((la + lb, ga));
            } else {
                next.push((la, ga));
            }
        }
        parts = next;
    }
    let (loss, grad) = parts.pop().unwrap();
    if !loss.is_finite() || grad.0.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("gradient reduction"));
    }
    Ok((loss, grad))
}

/// Evaluates many inputs in parallel, preserving order.
pub fn forward_many<T: Scalar, I: AsRef<[T]> + Sync>(params: &MlpParams<T>, inputs: &[I]) -> Result<Vec<T>> {
    for inp in inputs {
        params.check_input(inp.as_ref().len())?;
    }
    Ok(inputs.par_iter().map(|inp| params.forward_unchecked(inp.as_ref())).collect())
}

/// Jets at many inputs in parallel, preserving order.
pub fn jet_forward_many<T: Scalar, I: AsRef<[T]> + Sync>(params: &MlpParams<T>, inputs: &[I]) -> Result<Vec<Jet2<T>>> {
    for inp in inputs {
        params.check_input(inp.as_ref().len())?;
    }
    Ok(inputs.par_iter().map(|inp| JetTape::record(params, inp.as_ref()).output()).collect())
}
