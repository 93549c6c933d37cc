//! Small differentiable classifiers trained with the cross-entropy loss.
//!
//! Parameters live in one flat vector. Softmax regression stores `W (C×d)`
//! then `b (C)`; the MLP stores `W1 (h×d)`, `b1 (h)`, `W2 (C×h)`, `b2 (C)`.
//! All matrices are row-major with one row per output unit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;

use crate::data::{LabeledDataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::numerics::{dot, sq_norm};
use crate::rng;

/// Flattened model parameters, or an update or momentum of the same shape.
pub type ParamVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative given the pre-activation `z` and output `a`; ReLU uses 0 at 0.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SoftmaxRegression,
    Mlp { hidden_dim: usize, activation: Activation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub num_classes: usize,
}

/// One dense layer borrowed from a flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    pub inputs: usize,
    pub outputs: usize,
}

impl ModelSpec {
    pub fn softmax(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::SoftmaxRegression,
            feature_dim,
            num_classes,
        }
    }

    pub fn mlp(feature_dim: usize, hidden_dim: usize, num_classes: usize, activation: Activation) -> Self {
        Self {
            kind: ModelKind::Mlp {
                hidden_dim,
                activation,
            },
            feature_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(invalid("feature_dim must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(invalid("num_classes must be at least 2"));
        }
        if let ModelKind::Mlp { hidden_dim: 0, .. } = self.kind {
            return Err(invalid("hidden_dim must be at least 1"));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of each dense layer.
    fn shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::SoftmaxRegression => vec![(self.feature_dim, self.num_classes)],
            ModelKind::Mlp { hidden_dim, .. } => vec![
                (self.feature_dim, hidden_dim),
                (hidden_dim, self.num_classes),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Splits a flat parameter vector into its layers.
    pub fn layers<'a>(&self, theta: &'a [f64]) -> Result<Vec<Layer<'a>>> {
        self.check_params(theta)?;
        let mut rest = theta;
        let mut out = Vec::new();
        for (inputs, outputs) in self.shapes() {
            let (weights, tail) = rest.split_at(inputs * outputs);
            let (bias, tail) = tail.split_at(outputs);
            rest = tail;
            out.push(Layer {
                weights,
                bias,
                inputs,
                outputs,
            });
        }
        Ok(out)
    }

    pub fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn check_sample(&self, x: &[f64], y: usize) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                found: x.len(),
            });
        }
        if y >= self.num_classes {
            return Err(invalid(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Concatenates layers back into a flat vector.
pub fn flatten(layers: &[Layer<'_>]) -> ParamVector {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights);
        out.extend_from_slice(l.bias);
    }
    out
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "init", 0);
    let mut theta = Vec::with_capacity(spec.param_count());
    for (inputs, outputs) in spec.shapes() {
        let s = libm::sqrt(6.0 / (inputs + outputs) as f64);
        theta.extend((0..inputs * outputs).map(|_| rng.random_range(-s..s)));
        theta.extend(core::iter::repeat_n(0.0, outputs));
    }
    Ok(theta)
}

fn affine(layer: &Layer<'_>, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        layer
            .weights
            .chunks_exact(layer.inputs)
            .zip(layer.bias)
            .map(|(w, b)| dot(w, input) + b),
    );
}

/// Forward pass keeping the hidden pre-activations and activations.
struct Forward {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn forward(spec: &ModelSpec, layers: &[Layer<'_>], x: &[f64]) -> Forward {
    let mut f = Forward {
        hidden_pre: Vec::new(),
        hidden: Vec::new(),
        logits: Vec::new(),
    };
    match spec.kind {
        ModelKind::SoftmaxRegression => affine(&layers[0], x, &mut f.logits),
        ModelKind::Mlp { activation, .. } => {
            affine(&layers[0], x, &mut f.hidden_pre);
            f.hidden = f.hidden_pre.iter().map(|&z| activation.apply(z)).collect();
            affine(&layers[1], &f.hidden, &mut f.logits);
        }
    }
    f
}

pub fn logits(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let layers = spec.layers(theta)?;
    if x.len() != spec.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim,
            found: x.len(),
        });
    }
    Ok(forward(spec, &layers, x).logits)
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + libm::log(z.iter().map(|v| libm::exp(v - m)).sum::<f64>())
}

/// Softmax probabilities written into `z` in place.
fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - m);
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Cross-entropy `−log softmax(Φ(x))_y`.
pub fn pointwise_loss(spec: &ModelSpec, theta: &[f64], x: &[f64], y: usize) -> Result<f64> {
    spec.check_sample(x, y)?;
    let z = logits(spec, theta, x)?;
    Ok(log_sum_exp(&z) - z[y])
}

/// Smallest index among the maximal logits.
pub fn predict(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Result<usize> {
    let z = logits(spec, theta, x)?;
    let mut best = 0;
    for (c, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = c;
        }
    }
    Ok(best)
}

fn check_batch(spec: &ModelSpec, theta: &[f64], batch: &[Sample<'_>], weights: &[f64]) -> Result<()> {
    spec.check_params(theta)?;
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    if weights.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            found: weights.len(),
        });
    }
    for s in batch {
        spec.check_sample(s.x, s.y)?;
    }
    Ok(())
}

/// `(1/|B|) Σ_k w_k ℓ(y_k, Φ(x_k)) + (l2_reg/2)‖θ‖²`.
pub fn weighted_batch_loss(
    spec: &ModelSpec,
    theta: &[f64],
    batch: &[Sample<'_>],
    weights: &[f64],
    l2_reg: f64,
) -> Result<f64> {
    check_batch(spec, theta, batch, weights)?;
    let layers = spec.layers(theta)?;
    let mut total = 0.0;
    for (s, &w) in batch.iter().zip(weights) {
        let z = forward(spec, &layers, s.x).logits;
        total += w * (log_sum_exp(&z) - z[s.y]);
    }
    Ok(total / batch.len() as f64 + 0.5 * l2_reg * sq_norm(theta))
}

/// Gradient of [`weighted_batch_loss`] by backpropagation.
pub fn weighted_batch_gradient(
    spec: &ModelSpec,
    theta: &[f64],
    batch: &[Sample<'_>],
    weights: &[f64],
    l2_reg: f64,
) -> Result<ParamVector> {
    check_batch(spec, theta, batch, weights)?;
    let layers = spec.layers(theta)?;
    let mut grad = vec![0.0; theta.len()];
    let inv = 1.0 / batch.len() as f64;
    for (s, &w) in batch.iter().zip(weights) {
        if w != 0.0 {
            accumulate_gradient(spec, &layers, s, w * inv, &mut grad);
        }
    }
    if l2_reg != 0.0 {
        for (g, t) in grad.iter_mut().zip(theta) {
            *g += l2_reg * t;
        }
    }
    Ok(grad)
}

/// Adds `scale · ∇_θ ℓ(y, Φ(x))` to `grad`.
fn accumulate_gradient(spec: &ModelSpec, layers: &[Layer<'_>], s: &Sample<'_>, scale: f64, grad: &mut [f64]) {
    let mut f = forward(spec, layers, s.x);
    softmax_in_place(&mut f.logits);
    let mut delta = f.logits;
    delta[s.y] -= 1.0;
    match spec.kind {
        ModelKind::SoftmaxRegression => {
            dense_backward(&delta, s.x, scale, grad);
        }
        ModelKind::Mlp { activation, .. } => {
            let first = layers[0].weights.len() + layers[0].bias.len();
            let (g1, g2) = grad.split_at_mut(first);
            dense_backward(&delta, &f.hidden, scale, g2);
            let out = &layers[1];
            let dz: Vec<f64> = (0..out.inputs)
                .map(|j| {
                    let back: f64 = (0..out.outputs)
                        .map(|c| out.weights[c * out.inputs + j] * delta[c])
                        .sum();
                    back * activation.derivative(f.hidden_pre[j], f.hidden[j])
                })
                .collect();
            dense_backward(&dz, s.x, scale, g1);
        }
    }
}

/// Weight and bias gradients of one dense layer: `δ ⊗ input` then `δ`.
fn dense_backward(delta: &[f64], input: &[f64], scale: f64, grad: &mut [f64]) {
    let n_in = input.len();
    let (gw, gb) = grad.split_at_mut(delta.len() * n_in);
    for (c, &d) in delta.iter().enumerate() {
        let sd = scale * d;
        for (g, &x) in gw[c * n_in..(c + 1) * n_in].iter_mut().zip(input) {
            *g += sd * x;
        }
        gb[c] += sd;
    }
}

/// Central differences of [`weighted_batch_loss`], one coordinate at a time.
pub fn finite_difference_gradient(
    spec: &ModelSpec,
    theta: &[f64],
    batch: &[Sample<'_>],
    weights: &[f64],
    l2_reg: f64,
    step: f64,
) -> Result<ParamVector> {
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    check_batch(spec, theta, batch, weights)?;
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            probe[k] = theta[k] + step;
            let up = weighted_batch_loss(spec, &probe, batch, weights, l2_reg)?;
            probe[k] = theta[k] - step;
            let down = weighted_batch_loss(spec, &probe, batch, weights, l2_reg)?;
            probe[k] = theta[k];
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}

/// Signs of the hidden pre-activations over a batch (empty for softmax
/// regression). Two parameter vectors with equal patterns lie on the same
/// smooth piece of a ReLU network.
pub fn activation_pattern(spec: &ModelSpec, theta: &[f64], batch: &[Sample<'_>]) -> Result<Vec<bool>> {
    let layers = spec.layers(theta)?;
    Ok(match spec.kind {
        ModelKind::SoftmaxRegression => Vec::new(),
        ModelKind::Mlp { .. } => batch
            .iter()
            .flat_map(|s| forward(spec, &layers, s.x).hidden_pre.into_iter().map(|z| z > 0.0))
            .collect(),
    })
}

/// Mean unweighted cross-entropy over a dataset.
pub fn dataset_loss(spec: &ModelSpec, theta: &[f64], ds: &LabeledDataset) -> Result<f64> {
    let batch: Vec<Sample<'_>> = ds.samples().collect();
    let ones = vec![1.0; batch.len()];
    weighted_batch_loss(spec, theta, &batch, &ones, 0.0)
}
