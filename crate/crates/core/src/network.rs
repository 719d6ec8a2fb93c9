//! Fully-connected tanh networks: layout, initialization, evaluation and
//! checkpoint files.
//!
//! Parameters live in one flat buffer. Layer `l` occupies a contiguous
//! block holding its weight matrix (`fan_out × fan_in`, row-major) followed
//! by its bias vector. Gradients produced by [`crate::autodiff`] use the
//! same layout, so optimizers can work directly on the flat slice.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which part of the model a network plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetRole {
    /// Solution network.
    NetU,
    /// Source network.
    NetG,
    /// Solution network with delayed recurrent taps.
    NetURp,
}

/// Architecture and seed of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub role: NetRole,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub input_dim: usize,
    pub seed: u64,
}

impl NetSpec {
    /// 3 × 30 solution network.
    pub fn net_u(seed: u64) -> Self {
        NetSpec { role: NetRole::NetU, hidden_layers: 3, hidden_width: 30, input_dim: 2, seed }
    }

    /// 8 × 20 source network over `(x, t)`.
    pub fn net_g(seed: u64) -> Self {
        NetSpec { role: NetRole::NetG, hidden_layers: 8, hidden_width: 20, input_dim: 2, seed }
    }

    /// 8 × 20 source network over `x` alone, for time-independent sources.
    pub fn net_g_steady(seed: u64) -> Self {
        NetSpec { input_dim: 1, ..Self::net_g(seed) }
    }

    /// Solution network with `taps` extra delayed inputs.
    pub fn net_u_rp(taps: usize, seed: u64) -> Self {
        NetSpec { role: NetRole::NetURp, hidden_layers: 3, hidden_width: 30, input_dim: 2 + taps, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::Config(format!(
                "network needs at least one hidden layer of width >= 1, got {}x{}",
                self.hidden_layers, self.hidden_width
            )));
        }
        let min_inputs = if self.role == NetRole::NetG { 1 } else { 2 };
        if self.input_dim < min_inputs || (self.role == NetRole::NetG && self.input_dim > 2) {
            return Err(Error::Config(format!("{:?} network cannot take input_dim={}", self.role, self.input_dim)));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers + 2);
        sizes.push(self.input_dim);
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// Offsets of one layer inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

impl LayerLayout {
    #[inline]
    pub fn weight_index(&self, row: usize, col: usize) -> usize {
        self.weights + row * self.fan_in + col
    }

    #[inline]
    pub fn end(&self) -> usize {
        self.biases + self.fan_out
    }
}

/// Weights and biases of a tanh MLP with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layer_sizes: Vec<usize>,
    layout: Vec<LayerLayout>,
    data: Vec<T>,
}

fn build_layout(layer_sizes: &[usize]) -> Vec<LayerLayout> {
    let mut offset = 0;
    layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let l = LayerLayout { fan_in, fan_out, weights: offset, biases: offset + fan_in * fan_out };
            offset = l.end();
            l
        })
        .collect()
}

/// Number of parameters of a network with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl<T: Scalar> MlpParams<T> {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::from_flat(layer_sizes.to_vec(), vec![T::zero(); param_count(layer_sizes)])
    }

    pub fn from_flat(layer_sizes: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Structural(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let expected = param_count(&layer_sizes);
        if data.len() != expected {
            return Err(Error::Structural(format!(
                "layer sizes {layer_sizes:?} need {expected} parameters, got {}",
                data.len()
            )));
        }
        let layout = build_layout(&layer_sizes);
        Ok(MlpParams { layer_sizes, layout, data })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<T> {
        self.data
    }

    /// Same architecture, new parameter values.
    pub fn with_flat(&self, data: Vec<T>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::Structural(format!("expected {} parameters, got {}", self.data.len(), data.len())));
        }
        Ok(MlpParams { layer_sizes: self.layer_sizes.clone(), layout: self.layout.clone(), data })
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> T {
        self.data[self.layout[layer].weight_index(row, col)]
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, v: T) {
        let i = self.layout[layer].weight_index(row, col);
        self.data[i] = v;
    }

    pub fn bias(&self, layer: usize, row: usize) -> T {
        self.data[self.layout[layer].biases + row]
    }

    pub fn set_bias(&mut self, layer: usize, row: usize, v: T) {
        let i = self.layout[layer].biases + row;
        self.data[i] = v;
    }

    pub(crate) fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Structural(format!("network expects {} inputs, got {len}", self.input_dim())));
        }
        Ok(())
    }

    /// Evaluates the network at one input and returns its first output.
    pub fn forward(&self, input: &[T]) -> Result<T> {
        self.check_input(input.len())?;
        Ok(self.forward_unchecked(input))
    }

    pub(crate) fn forward_unchecked(&self, input: &[T]) -> T {
        let mut act = input.to_vec();
        let mut next = Vec::new();
        let last = self.layout.len() - 1;
        for (l, lay) in self.layout.iter().enumerate() {
            next.clear();
            for r in 0..lay.fan_out {
                let row = &self.data[lay.weights + r * lay.fan_in..lay.weights + (r + 1) * lay.fan_in];
                let mut z = T::zero();
                for (w, a) in row.iter().zip(&act) {
                    z += *w * *a;
                }
                z += self.data[lay.biases + r];
                next.push(if l == last { z } else { z.tanh() });
            }
            std::mem::swap(&mut act, &mut next);
        }
        act[0]
    }
}

/// Xavier-uniform weights, zero biases, deterministic in `spec.seed`.
pub fn init_xavier<T: Scalar>(spec: &NetSpec) -> Result<MlpParams<T>> {
    spec.validate()?;
    let sizes = spec.layer_sizes();
    let mut params = MlpParams::<T>::zeros(&sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for lay in params.layout.clone() {
        fill_xavier(&mut params.data[lay.weights..lay.biases], lay.fan_in, lay.fan_out, &mut rng);
    }
    Ok(params)
}

/// Rewrites the first layer so that it sees input `j` affinely mapped from
/// `[lo[j], hi[j]]` onto `[-1, 1]`; the network function of the raw input
/// is what changes, the parameter layout is not.
pub fn fold_input_box<T: Scalar>(net: &mut MlpParams<T>, lo: &[T], hi: &[T]) -> Result<()> {
    if lo.len() != hi.len() || lo.len() > net.input_dim() {
        return Err(Error::Structural("input box does not match the network inputs".into()));
    }
    let two = T::lit(2.0);
    for (j, (&a, &b)) in lo.iter().zip(hi).enumerate() {
        if !(b > a) {
            return Err(Error::Config(format!("empty input range for input {j}")));
        }
        let scale = two / (b - a);
        for r in 0..net.layer_sizes()[1] {
            let w = net.weight(0, r, j);
            net.set_weight(0, r, j, w * scale);
            let bias = net.bias(0, r);
            net.set_bias(0, r, bias - w * (scale * a + T::one()));
        }
    }
    Ok(())
}

/// Fills `out` with draws from U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
pub fn fill_xavier<T: Scalar, R: rand::Rng>(out: &mut [T], fan_in: usize, fan_out: usize, rng: &mut R) {
    let bound = xavier_bound(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for w in out {
        *w = T::lit(dist.sample(rng));
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

const MAGIC: &[u8; 8] = b"CPINNMLP";
const VERSION: u32 = 1;

impl<T: Scalar> MlpParams<T> {
    /// Serializes to the checkpoint byte format.
    ///
    /// Layout (little-endian): 8-byte magic, u32 version, u32 layer count,
    /// one u64 per layer size, then every parameter as f64 in flat order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * (self.layer_sizes.len() + self.data.len()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &n in &self.layer_sizes {
            buf.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cur.len() < n {
                return Err(format!("truncated: wanted {n} more bytes, {} left", cur.len()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let n_layers = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if !(2..=1024).contains(&n_layers) {
            return Err(format!("implausible layer count {n_layers}"));
        }
        let mut sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n = u64::from_le_bytes(take(8)?.try_into().unwrap());
            if n == 0 || n > 1 << 20 {
                return Err(format!("implausible layer size {n}"));
            }
            sizes.push(n as usize);
        }
        let count = param_count(&sizes);
        let payload = take(count * 8)?;
        let rest = cur.len();
        if rest != 0 {
            return Err(format!("{rest} trailing bytes after payload"));
        }
        let data = payload.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap()))).collect();
        MlpParams::from_flat(sizes, data).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path.as_ref())?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint { path: path.to_path_buf(), reason })
    }
}
