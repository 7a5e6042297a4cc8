//! Minimal fully-connected network with analytic backprop, per-example
//! gradients and a DP-SGD step (clip + noise). Shared by the VAE and GAN
//! generators.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out_dim x in_dim`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// A plain multi-layer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer parameter gradients, aligned with `Mlp::layers`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(1.0, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(1.0, b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.weights.iter_mut() {
            a.mapv_inplace(|v| v * factor);
        }
        for a in self.biases.iter_mut() {
            a.mapv_inplace(|v| v * factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }
}

/// Layer activations cached by a forward pass, consumed by `backward`.
pub struct ForwardCache {
    input: Array1<f64>,
    pre: Vec<Array1<f64>>,
    post: Vec<Array1<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array1<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

impl Mlp {
    /// Build a network with the given layer dimensions and one activation
    /// per layer. Weights use uniform(+-sqrt(6/(fan_in+fan_out))) init.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need input and output dimensions");
        assert_eq!(dims.len() - 1, activations.len(), "one activation per layer");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
                Layer { weight, bias: Array1::zeros(fan_out), activation }
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut cache = self.forward_cached(x);
        Ok(cache.post.pop().expect("network has at least one layer"))
    }

    /// Forward pass keeping pre- and post-activation values per layer.
    pub fn forward_cached(&self, x: &Array1<f64>) -> ForwardCache {
        debug_assert_eq!(x.len(), self.in_dim());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let z = affine(&layer.weight, &layer.bias, &current);
            let a = match layer.activation {
                Activation::Relu => z.mapv(|v| v.max(0.0)),
                Activation::Tanh => z.mapv(f64::tanh),
                Activation::Identity => z.clone(),
            };
            current = a.clone();
            pre.push(z);
            post.push(a);
        }
        ForwardCache { input: x.clone(), pre, post }
    }

    /// Backprop `upstream = dL/dy` through the cached pass; returns parameter
    /// gradients and `dL/dx`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array1<f64>) -> (Gradients, Array1<f64>) {
        debug_assert_eq!(upstream.len(), self.out_dim());
        let n_layers = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n_layers];
        let mut biases = vec![Array1::zeros(0); n_layers];

        let mut delta = upstream.clone();
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            // delta <- dL/dz_l
            match layer.activation {
                Activation::Relu => {
                    for (d, &z) in delta.iter_mut().zip(cache.pre[l].iter()) {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                Activation::Tanh => {
                    for (d, &a) in delta.iter_mut().zip(cache.post[l].iter()) {
                        *d *= 1.0 - a * a;
                    }
                }
                Activation::Identity => {}
            }
            let layer_input = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            weights[l] = outer(&delta, layer_input);
            biases[l] = delta.clone();
            delta = matvec_transpose(&layer.weight, &delta);
        }
        (Gradients { weights, biases }, delta)
    }

    /// Apply `param -= lr * grad` across all layers.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, (dw, db)) in
            self.layers.iter_mut().zip(grads.weights.iter().zip(grads.biases.iter()))
        {
            layer.weight.scaled_add(-learning_rate, dw);
            layer.bias.scaled_add(-learning_rate, db);
        }
    }

    /// Clamp every weight and bias into `[-c, c]` (WGAN Lipschitz clipping).
    pub fn clip_weights(&mut self, c: f64) {
        for layer in &mut self.layers {
            layer.weight.mapv_inplace(|v| v.clamp(-c, c));
            layer.bias.mapv_inplace(|v| v.clamp(-c, c));
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }
}

fn affine(w: &Array2<f64>, b: &Array1<f64>, x: &Array1<f64>) -> Array1<f64> {
    let xs = x.as_slice().expect("contiguous input");
    let mut out = b.clone();
    let os = out.as_slice_mut().expect("contiguous output");
    for (o, row) in os.iter_mut().zip(w.rows()) {
        let rs = row.to_slice().expect("contiguous weight row");
        let mut acc = 0.0;
        for (a, b) in rs.iter().zip(xs) {
            acc += a * b;
        }
        *o += acc;
    }
    out
}

fn outer(u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((u.len(), v.len()));
    let vs = v.as_slice().expect("contiguous rhs");
    for (mut row, &uval) in out.rows_mut().into_iter().zip(u.iter()) {
        let rs = row.as_slice_mut().expect("contiguous row");
        for (r, &vval) in rs.iter_mut().zip(vs) {
            *r = uval * vval;
        }
    }
    out
}

fn matvec_transpose(w: &Array2<f64>, u: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(w.ncols());
    let os = out.as_slice_mut().expect("contiguous output");
    for (row, &uval) in w.rows().into_iter().zip(u.iter()) {
        let rs = row.to_slice().expect("contiguous weight row");
        for (o, &wval) in os.iter_mut().zip(rs) {
            *o += uval * wval;
        }
    }
    out
}

/// DP-SGD settings. The noise standard deviation applied to the summed batch
/// gradient is `noise_multiplier * clip_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSgdConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidParams(format!("clip_norm must be > 0, got {}", self.clip_norm)));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::InvalidParams("noise_multiplier must be >= 0".into()));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::InvalidParams("batch_size and steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParams("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

fn grad_sq_norm(grads: &[Gradients]) -> f64 {
    grads
        .iter()
        .map(|g| {
            g.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
                + g.biases.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
        })
        .sum()
}

/// One DP-SGD update over a group of networks trained jointly.
///
/// `per_example[i]` holds example `i`'s gradients, one `Gradients` per
/// network. Each example's joint gradient is scaled by
/// `min(1, clip_norm / ||g||_2)`, the scaled gradients are summed, Gaussian
/// noise `N(0, (noise_multiplier * clip_norm)^2)` is added per coordinate,
/// the sum is divided by `batch_size`, and a plain SGD step is applied.
pub fn dp_sgd_step<R: Rng + ?Sized>(
    nets: &mut [&mut Mlp],
    per_example: &[Vec<Gradients>],
    config: &DpSgdConfig,
    rng: &mut R,
) {
    assert!(!per_example.is_empty(), "need at least one example");
    let mut sums: Vec<Gradients> = nets
        .iter()
        .map(|net| Gradients {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        })
        .collect();

    for example in per_example {
        debug_assert_eq!(example.len(), nets.len());
        let norm = grad_sq_norm(example).sqrt();
        let scale =
            if norm > 0.0 && config.clip_norm.is_finite() { (config.clip_norm / norm).min(1.0) } else { 1.0 };
        for (sum, grad) in sums.iter_mut().zip(example) {
            for (sw, gw) in sum.weights.iter_mut().zip(&grad.weights) {
                sw.scaled_add(scale, gw);
            }
            for (sb, gb) in sum.biases.iter_mut().zip(&grad.biases) {
                sb.scaled_add(scale, gb);
            }
        }
    }

    let noise_std = config.noise_multiplier * config.clip_norm;
    let inv_batch = 1.0 / config.batch_size as f64;
    for sum in sums.iter_mut() {
        for arr in sum.weights.iter_mut() {
            if noise_std > 0.0 {
                arr.mapv_inplace(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal));
            }
            arr.mapv_inplace(|v| v * inv_batch);
        }
        for arr in sum.biases.iter_mut() {
            if noise_std > 0.0 {
                arr.mapv_inplace(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal));
            }
            arr.mapv_inplace(|v| v * inv_batch);
        }
    }

    for (net, sum) in nets.iter_mut().zip(&sums) {
        net.apply_gradients(sum, config.learning_rate);
    }
}

/// L2 norm of one example's joint gradient after clipping would be applied;
/// exposed for the clipping invariant checks.
pub fn clipped_norm(grads: &[Gradients], clip_norm: f64) -> f64 {
    let norm = grad_sq_norm(grads).sqrt();
    let scale = if norm > 0.0 && clip_norm.is_finite() { (clip_norm / norm).min(1.0) } else { 1.0 };
    norm * scale
}
