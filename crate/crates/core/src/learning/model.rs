//! Fully connected softmax classifier over a flat parameter vector.
//!
//! Parameters are stored layer by layer: the `out x in` weight matrix in
//! row-major order followed by the `out` biases. Every reduction runs
//! left to right in batch order, so results are bit-reproducible.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
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

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (valid: relu, tanh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input width, hidden widths..., number of classes.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "model needs >= 2 positive layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if *self.layer_sizes.last().unwrap() < 2 {
            return Err(Error::Config("output layer needs >= 2 classes".into()));
        }
        Ok(())
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if self.input_dim() != dataset.n_features() || self.n_classes() != dataset.n_classes() {
            return Err(Error::Shape(format!(
                "model {:?} does not fit dataset with {} features and {} classes",
                self.layer_sizes,
                dataset.n_features(),
                dataset.n_classes()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// (weight offset, bias offset, fan_in, fan_out) for every layer.
    fn layout(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let entry = (offset, offset + fan_in * fan_out, fan_in, fan_out);
                offset += fan_in * fan_out + fan_out;
                entry
            })
            .collect()
    }

    /// Indices of every bias entry in the flat vector.
    pub fn bias_indices(&self) -> Vec<usize> {
        self.layout()
            .into_iter()
            .flat_map(|(_, b, _, out)| b..b + out)
            .collect()
    }
}

/// Flat model weights; every protocol message carries one of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite parameter at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// True when both vectors have identical bit patterns.
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn check_len(&self, spec: &ModelSpec) -> Result<()> {
        if self.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, model {:?} needs {}",
                self.len(),
                spec.layer_sizes,
                spec.param_count()
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng_from(derive_seed(seed, &[stream::MODEL_INIT]));
    let mut values = vec![0.0; spec.param_count()];
    for (w, _, fan_in, fan_out) in spec.layout() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut values[w..w + fan_in * fan_out] {
            *v = rng.random_range(-limit..=limit);
        }
    }
    Ok(ParamVector(values))
}

/// Scratch buffers for one forward/backward pass, reused across samples.
struct Workspace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(spec: &ModelSpec) -> Self {
        let hidden_and_out = &spec.layer_sizes[1..];
        Self {
            pre: hidden_and_out.iter().map(|&n| vec![0.0; n]).collect(),
            act: hidden_and_out.iter().map(|&n| vec![0.0; n]).collect(),
            delta: hidden_and_out.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// Numerically stable log-sum-exp; `logits` is non-empty.
fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits {
        sum += (z - max).exp();
    }
    max + sum.ln()
}

/// Runs the forward pass for one sample; the output layer's logits end up in
/// `ws.pre[last]`. Returns the cross-entropy loss for `label`.
fn forward(
    params: &[f64],
    spec: &ModelSpec,
    layout: &[(usize, usize, usize, usize)],
    x: &[f64],
    label: usize,
    ws: &mut Workspace,
) -> f64 {
    let last = layout.len() - 1;
    for (l, &(w, b, fan_in, fan_out)) in layout.iter().enumerate() {
        let (prev_act, rest) = ws.act.split_at_mut(l);
        let input: &[f64] = if l == 0 { x } else { &prev_act[l - 1] };
        let pre = &mut ws.pre[l];
        for o in 0..fan_out {
            let row = &params[w + o * fan_in..w + (o + 1) * fan_in];
            let mut z = params[b + o];
            for (wi, xi) in row.iter().zip(input) {
                z += wi * xi;
            }
            pre[o] = z;
        }
        if l < last {
            for (a, &z) in rest[0].iter_mut().zip(pre.iter()) {
                *a = spec.activation.apply(z);
            }
        }
    }
    let logits = &ws.pre[last];
    log_sum_exp(logits) - logits[label]
}

/// Mean softmax cross-entropy and its gradient over `labels.len()` rows
/// (`features` is row-major with the model's input width).
pub fn forward_backward(
    params: &ParamVector,
    spec: &ModelSpec,
    features: &[f64],
    labels: &[usize],
) -> Result<(f64, ParamVector)> {
    params.check_len(spec)?;
    let d = spec.input_dim();
    if labels.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if features.len() != labels.len() * d {
        return Err(Error::Shape(format!(
            "{} feature values for {} rows of width {d}",
            features.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= spec.n_classes()) {
        return Err(Error::Shape(format!(
            "label {bad} outside [0, {})",
            spec.n_classes()
        )));
    }
    let rows = features.chunks_exact(d).zip(labels.iter().copied());
    Ok(batch_gradient(params.as_slice(), spec, rows))
}

/// Unchecked core of [`forward_backward`] over an arbitrary row iterator.
pub(crate) fn batch_gradient<'a>(
    params: &[f64],
    spec: &ModelSpec,
    rows: impl Iterator<Item = (&'a [f64], usize)>,
) -> (f64, ParamVector) {
    let layout = spec.layout();
    let last = layout.len() - 1;
    let mut ws = Workspace::new(spec);
    let mut grad = vec![0.0; params.len()];
    let mut loss_sum = 0.0;
    let mut n = 0usize;

    for (x, label) in rows {
        loss_sum += forward(params, spec, &layout, x, label, &mut ws);
        n += 1;

        // Output delta: softmax(z) - onehot(label).
        let logits = &ws.pre[last];
        let lse = log_sum_exp(logits);
        for (o, (dst, z)) in ws.delta[last].iter_mut().zip(logits).enumerate() {
            *dst = (z - lse).exp() - if o == label { 1.0 } else { 0.0 };
        }

        for l in (0..=last).rev() {
            let (w, b, fan_in, fan_out) = layout[l];
            let input: &[f64] = if l == 0 { x } else { &ws.act[l - 1] };
            let delta = &ws.delta[l];
            for o in 0..fan_out {
                let g = delta[o];
                grad[b + o] += g;
                let row = &mut grad[w + o * fan_in..w + (o + 1) * fan_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += g * xi;
                }
            }
            if l > 0 {
                let (lower, upper) = ws.delta.split_at_mut(l);
                let below = &mut lower[l - 1];
                for (i, dst) in below.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for o in 0..fan_out {
                        s += params[w + o * fan_in + i] * upper[0][o];
                    }
                    *dst = s * spec.activation.derivative(ws.pre[l - 1][i], ws.act[l - 1][i]);
                }
            }
        }
    }

    let n_f = n as f64;
    for g in &mut grad {
        *g /= n_f;
    }
    (loss_sum / n_f, ParamVector(grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub avg_loss: f64,
    pub n_samples: usize,
}

pub fn evaluate(params: &ParamVector, spec: &ModelSpec, dataset: &Dataset) -> Result<EvalReport> {
    params.check_len(spec)?;
    spec.check_dataset(dataset)?;
    let layout = spec.layout();
    let last = layout.len() - 1;
    let mut ws = Workspace::new(spec);
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for i in 0..dataset.n_samples() {
        let label = dataset.label(i);
        loss_sum += forward(params.as_slice(), spec, &layout, dataset.row(i), label, &mut ws);
        let logits = &ws.pre[last];
        // Strict `>` keeps the lowest class id on ties.
        let mut best = 0;
        for (c, &z) in logits.iter().enumerate().skip(1) {
            if z > logits[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    let n = dataset.n_samples();
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        avg_loss: loss_sum / n as f64,
        n_samples: n,
    })
}
