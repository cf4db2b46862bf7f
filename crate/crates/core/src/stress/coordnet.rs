use alloc::vec::Vec;

use super::StressTensor;
use crate::error::{Error, Result};
use crate::math::{sin_cos, sqrt, tanh, Vec3};
use crate::rng::SplitMix64;

/// Shape of a coordinate network: `hidden_layers` tanh layers of `width`
/// units on top of a positional encoding with `freqs` octaves, and a linear
/// head emitting the five free components `(sxx, syy, sxy, syz, szx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetArch {
    pub hidden_layers: usize,
    pub width: usize,
    pub freqs: usize,
}

impl Default for NetArch {
    fn default() -> Self {
        NetArch {
            hidden_layers: 6,
            width: 64,
            freqs: 4,
        }
    }
}

pub const NET_OUTPUTS: usize = 5;

impl NetArch {
    pub fn input_dim(&self) -> usize {
        3 + 6 * self.freqs
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            out.push((fan_in, self.width));
            fan_in = self.width;
        }
        out.push((fan_in, NET_OUTPUTS));
        out
    }

    /// Weights are stored layer by layer, each as a row-major `fan_out x
    /// fan_in` matrix followed by `fan_out` biases.
    pub fn n_weights(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    fn activation_len(&self) -> usize {
        self.input_dim() + self.hidden_layers * self.width + NET_OUTPUTS
    }
}

/// Network shape plus the box its inputs are normalized over.
#[derive(Debug, Clone, PartialEq)]
pub struct NetShape {
    pub arch: NetArch,
    pub min: Vec3,
    pub max: Vec3,
}

impl NetShape {
    pub fn new(arch: NetArch, min: Vec3, max: Vec3) -> Result<Self> {
        if arch.width == 0 {
            return Err(Error::Config("network width must be positive".into()));
        }
        if !(0..3).all(|i| max[i] > min[i]) {
            return Err(Error::Config("network input box is empty".into()));
        }
        Ok(NetShape { arch, min, max })
    }

    /// Uniform `±sqrt(6 / fan_in)` weights, zero biases.
    pub fn init_weights(&self, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        let mut w = Vec::with_capacity(self.arch.n_weights());
        for (fan_in, fan_out) in self.arch.layers() {
            let bound = sqrt(6.0 / fan_in as f64);
            w.extend((0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)));
            w.extend(core::iter::repeat(0.0).take(fan_out));
        }
        w
    }

    fn encode(&self, p: Vec3, out: &mut [f64]) {
        let mut k = 0;
        for a in 0..3 {
            let x = 2.0 * (p[a] - self.min[a]) / (self.max[a] - self.min[a]) - 1.0;
            out[k] = x;
            k += 1;
            let mut f = core::f64::consts::PI;
            for _ in 0..self.arch.freqs {
                let (s, c) = sin_cos(f * x);
                out[k] = s;
                out[k + 1] = c;
                k += 2;
                f *= 2.0;
            }
        }
    }

    /// Evaluate the network; `acts` is scratch space that ends up holding
    /// every layer's output.
    pub fn eval(&self, weights: &[f64], p: Vec3, acts: &mut Vec<f64>) -> [f64; NET_OUTPUTS] {
        acts.clear();
        acts.resize(self.arch.activation_len(), 0.0);
        self.encode(p, &mut acts[..self.arch.input_dim()]);
        let layers = self.arch.layers();
        let last = layers.len() - 1;
        let (mut woff, mut aoff) = (0, 0);
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let (prev, next) = acts.split_at_mut(aoff + fan_in);
            let input = &prev[aoff..];
            let bias = &weights[woff + fan_in * fan_out..woff + fan_in * fan_out + fan_out];
            for o in 0..fan_out {
                let row = &weights[woff + o * fan_in..woff + (o + 1) * fan_in];
                let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + bias[o];
                next[o] = if l == last { z } else { tanh(z) };
            }
            woff += fan_in * fan_out + fan_out;
            aoff += fan_in;
        }
        let out = &acts[aoff..aoff + NET_OUTPUTS];
        core::array::from_fn(|i| out[i])
    }

    /// Add `∂(g · net(p)) / ∂weights` into `grad`.
    pub fn backprop(
        &self,
        weights: &[f64],
        p: Vec3,
        g: [f64; NET_OUTPUTS],
        grad: &mut [f64],
        acts: &mut Vec<f64>,
    ) {
        self.eval(weights, p, acts);
        let layers = self.arch.layers();
        let mut woffs = Vec::with_capacity(layers.len());
        let mut aoffs = Vec::with_capacity(layers.len());
        let (mut woff, mut aoff) = (0, 0);
        for &(fan_in, fan_out) in &layers {
            woffs.push(woff);
            aoffs.push(aoff);
            woff += fan_in * fan_out + fan_out;
            aoff += fan_in;
        }
        let mut delta: Vec<f64> = g.to_vec();
        let mut prev_delta = Vec::new();
        for l in (0..layers.len()).rev() {
            let (fan_in, fan_out) = layers[l];
            let (wo, ao) = (woffs[l], aoffs[l]);
            let input = &acts[ao..ao + fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                let row = &mut grad[wo + o * fan_in..wo + (o + 1) * fan_in];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
                grad[wo + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            prev_delta.clear();
            prev_delta.resize(fan_in, 0.0);
            for o in 0..fan_out {
                let d = delta[o];
                let row = &weights[wo + o * fan_in..wo + (o + 1) * fan_in];
                for (pd, w) in prev_delta.iter_mut().zip(row) {
                    *pd += d * w;
                }
            }
            // inputs of layer l > 0 are tanh outputs
            for (pd, a) in prev_delta.iter_mut().zip(input) {
                *pd *= 1.0 - a * a;
            }
            core::mem::swap(&mut delta, &mut prev_delta);
        }
    }
}

/// A coordinate network with its weights: the field is trace-free, with
/// `szz = -sxx - syy`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordNet {
    pub shape: NetShape,
    pub weights: Vec<f64>,
}

impl CoordNet {
    pub fn new(shape: NetShape, weights: Vec<f64>) -> Result<Self> {
        let n = shape.arch.n_weights();
        if weights.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        Ok(CoordNet { shape, weights })
    }

    pub fn query(&self, p: Vec3) -> StressTensor {
        let mut acts = Vec::new();
        StressTensor::from_trace_free(self.shape.eval(&self.weights, p, &mut acts))
    }
}
