//! From-scratch binary classifiers: a linear model or a ReLU MLP with a
//! single logit output, trained with Nesterov-momentum SGD on binary
//! cross-entropy. All arithmetic is `f64`.

mod augment;
mod checkpoint;
mod schedule;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Class;
use crate::rng::substream;

pub use augment::{augment, flip_horizontal};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use schedule::{lr_at, milestones, round_half_up, TrainConfig};
pub use train::{predict, predict_inputs, train, PredictionRecord, Snapshot};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: `{field}` {message}")]
    Config { field: String, message: String },
    #[error("input dimension mismatch: model expects {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty batch or dataset")]
    Empty,
    #[error("checkpoint format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        ModelError::Config { field: field.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub family: Family,
    /// Hidden layer count; must be 0 for the linear family.
    pub depth: usize,
    pub width: usize,
    pub input_dimension: usize,
}

impl ArchConfig {
    pub fn linear(input_dimension: usize) -> Self {
        ArchConfig { family: Family::Linear, depth: 0, width: 1, input_dimension }
    }

    pub fn mlp(input_dimension: usize, depth: usize, width: usize) -> Self {
        ArchConfig { family: Family::Mlp, depth, width, input_dimension }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dimension == 0 {
            return Err(ModelError::config("input_dimension", "must be positive"));
        }
        if self.family == Family::Linear && self.depth != 0 {
            return Err(ModelError::config("depth", "the linear family has no hidden layers"));
        }
        if self.width == 0 {
            return Err(ModelError::config("width", "must be at least 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.input_dimension;
        for _ in 0..self.depth {
            dims.push((fan_in, self.width));
            fan_in = self.width;
        }
        dims.push((fan_in, 1));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }
}

/// Parameter-shaped tensors: model weights, velocities or gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<Dense>,
}

impl Parameters {
    pub fn zeros(arch: &ArchConfig) -> Self {
        Parameters { layers: arch.layer_dims().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect() }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view: each layer's weights, then its biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: ArchConfig,
    pub params: Parameters,
    pub velocity: Parameters,
    /// Completed epochs.
    pub epoch: usize,
}

/// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` from the substream
/// `("init", seed)`; biases and velocities start at zero.
pub fn init_model(arch: &ArchConfig, seed: u64) -> Result<ModelState, ModelError> {
    arch.validate()?;
    let mut rng = substream("init", seed);
    let mut params = Parameters::zeros(arch);
    for layer in &mut params.layers {
        let bound = 1.0 / (layer.inputs as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(ModelState { arch: *arch, velocity: Parameters::zeros(arch), params, epoch: 0 })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a logit against a class.
pub fn bce_with_logit(z: f64, class: Class) -> f64 {
    softplus(z) - class.target() * z
}

fn dense_forward(layer: &Dense, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for o in 0..layer.outputs {
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let dot: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
        out.push(dot + layer.bias[o]);
    }
}

/// Logit for one input vector.
pub fn logit(params: &Parameters, x: &[f64]) -> f64 {
    let mut current = x.to_vec();
    let mut next = Vec::new();
    let last = params.layers.len() - 1;
    for (i, layer) in params.layers.iter().enumerate() {
        dense_forward(layer, &current, &mut next);
        if i < last {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        std::mem::swap(&mut current, &mut next);
    }
    current[0]
}

fn check_input(arch: &ArchConfig, x: &[f64]) -> Result<(), ModelError> {
    if x.len() != arch.input_dimension {
        return Err(ModelError::Dimension { expected: arch.input_dimension, actual: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("input features".into()));
    }
    Ok(())
}

/// Probability of the positive class for every example in `batch`.
pub fn forward<X: AsRef<[f64]>>(model: &ModelState, batch: &[X]) -> Result<Vec<f64>, ModelError> {
    batch
        .iter()
        .map(|x| {
            check_input(&model.arch, x.as_ref())?;
            Ok(sigmoid(logit(&model.params, x.as_ref())))
        })
        .collect()
}

/// Mean BCE over the batch plus `weight_decay / 2 * ||W||^2` over weights
/// (biases are not decayed), and its gradient.
pub fn loss_and_grad<X: AsRef<[f64]>>(
    params: &Parameters,
    inputs: &[X],
    labels: &[Class],
    weight_decay: f64,
) -> Result<(f64, Parameters), ModelError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(ModelError::Empty);
    }
    let n_layers = params.layers.len();
    let mut grads = Parameters { layers: params.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect() };
    let scale = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    // activations[0] is the input; activations[i + 1] is layer i's output
    // (post-ReLU for hidden layers, the logit for the last).
    let mut activations: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
    let mut delta = Vec::new();
    let mut prev_delta = Vec::new();
    for (x, &class) in inputs.iter().zip(labels) {
        activations[0].clear();
        activations[0].extend_from_slice(x.as_ref());
        for i in 0..n_layers {
            let (head, tail) = activations.split_at_mut(i + 1);
            dense_forward(&params.layers[i], &head[i], &mut tail[0]);
            if i + 1 < n_layers {
                tail[0].iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let z = activations[n_layers][0];
        loss += bce_with_logit(z, class);
        delta.clear();
        delta.push((sigmoid(z) - class.target()) * scale);
        for i in (0..n_layers).rev() {
            let layer = &params.layers[i];
            let g = &mut grads.layers[i];
            let input = &activations[i];
            for ((&d, gb), row) in delta.iter().zip(&mut g.bias).zip(g.weights.chunks_exact_mut(layer.inputs)) {
                if d == 0.0 {
                    continue;
                }
                *gb += d;
                for (gw, a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if i > 0 {
                prev_delta.clear();
                prev_delta.resize(layer.inputs, 0.0);
                for (&d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.inputs)) {
                    if d == 0.0 {
                        continue;
                    }
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += d * w;
                    }
                }
                // ReLU derivative, from the stored post-activation.
                for (pd, a) in prev_delta.iter_mut().zip(&activations[i]) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
    }
    loss *= scale;
    if weight_decay != 0.0 {
        for (layer, g) in params.layers.iter().zip(&mut grads.layers) {
            for (w, gw) in layer.weights.iter().zip(&mut g.weights) {
                loss += 0.5 * weight_decay * w * w;
                *gw += weight_decay * w;
            }
        }
    }
    Ok((loss, grads))
}

/// Nesterov momentum update: `v <- mu*v - lr*g`, then `w <- w + mu*v - lr*g`.
pub fn sgd_step(state: &mut ModelState, grads: &Parameters, lr: f64, momentum: f64) -> Result<(), ModelError> {
    if !grads.same_shape(&state.params) {
        return Err(ModelError::config("gradients", "shape does not match the model"));
    }
    if !grads.all_finite() {
        return Err(ModelError::NonFinite("gradient".into()));
    }
    for ((p, v), g) in state.params.layers.iter_mut().zip(&mut state.velocity.layers).zip(&grads.layers) {
        let pairs = p.weights.iter_mut().chain(p.bias.iter_mut());
        let vels = v.weights.iter_mut().chain(v.bias.iter_mut());
        let gs = g.weights.iter().chain(&g.bias);
        for ((w, vel), &gr) in pairs.zip(vels).zip(gs) {
            *vel = momentum * *vel - lr * gr;
            *w += momentum * *vel - lr * gr;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_has_three_parameters_in_2d() {
        let arch = ArchConfig::linear(2);
        let m = init_model(&arch, 1).unwrap();
        assert_eq!(arch.parameter_count(), 3);
        assert_eq!(m.params.len(), 3);
        assert_eq!(m.params.layers[0].bias, vec![0.0]);
        assert!(m.velocity.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mlp_parameter_count() {
        let arch = ArchConfig::mlp(784, 2, 64);
        assert_eq!(arch.parameter_count(), 784 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
        assert_eq!(arch.parameter_count(), 54_465);
        assert_eq!(init_model(&arch, 0).unwrap().params.len(), 54_465);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = ArchConfig::mlp(10, 1, 4);
        let a = init_model(&arch, 3).unwrap();
        assert_eq!(a, init_model(&arch, 3).unwrap());
        assert_ne!(a, init_model(&arch, 4).unwrap());
        let bound = 1.0 / 10f64.sqrt();
        assert!(a.params.layers[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn linear_with_depth_rejected() {
        let mut arch = ArchConfig::linear(3);
        arch.depth = 1;
        assert!(init_model(&arch, 0).is_err());
    }

    #[test]
    fn zero_parameters_give_half() {
        let arch = ArchConfig::mlp(3, 2, 5);
        let mut m = init_model(&arch, 0).unwrap();
        m.params = Parameters::zeros(&arch);
        let p = forward(&m, &[vec![1.0, -2.0, 3.0], vec![0.0; 3]]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn linear_forward_hand_value() {
        let mut m = init_model(&ArchConfig::linear(2), 0).unwrap();
        m.params.layers[0].weights = vec![0.5, -0.25];
        m.params.layers[0].bias = vec![0.1];
        let p = forward(&m, &[[1.0, 2.0]]).unwrap()[0];
        let z: f64 = 0.5 * 1.0 - 0.25 * 2.0 + 0.1;
        assert!((z - 0.1).abs() < 1e-15);
        assert!((p - 0.524_979_187_478_939_8).abs() < 1e-12, "{p}");
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = init_model(&ArchConfig::linear(2), 0).unwrap();
        assert!(matches!(forward(&m, &[[f64::NAN, 0.0]]), Err(ModelError::NonFinite(_))));
        assert!(matches!(forward(&m, &[[0.0]]), Err(ModelError::Dimension { .. })));
    }

    #[test]
    fn bce_at_zero_logit() {
        assert!((bce_with_logit(0.0, Class::Positive) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logit(0.0, Class::Negative) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logit(800.0, Class::Positive).is_finite());
        assert!(bce_with_logit(-800.0, Class::Positive) > 799.0);
    }

    #[test]
    fn weight_decay_adds_lambda_w() {
        let arch = ArchConfig::linear(1);
        let mut params = Parameters::zeros(&arch);
        params.layers[0].weights = vec![2.0];
        let x = [[0.0]];
        let (_, g0) = loss_and_grad(&params, &x, &[Class::Positive], 0.0).unwrap();
        let (_, g1) = loss_and_grad(&params, &x, &[Class::Positive], 1e-4).unwrap();
        assert!((g1.layers[0].weights[0] - g0.layers[0].weights[0] - 2e-4).abs() < 1e-18);
        // biases are not decayed
        assert_eq!(g1.layers[0].bias, g0.layers[0].bias);
    }

    fn single(w: f64) -> ModelState {
        let arch = ArchConfig::linear(1);
        let mut m = init_model(&arch, 0).unwrap();
        m.params.layers[0].weights = vec![w];
        m
    }

    fn grad_of(g: f64) -> Parameters {
        let mut p = Parameters::zeros(&ArchConfig::linear(1));
        p.layers[0].weights = vec![g];
        p
    }

    #[test]
    fn sgd_without_momentum_is_plain_step() {
        let mut m = single(1.0);
        sgd_step(&mut m, &grad_of(0.5), 0.1, 0.0).unwrap();
        assert_eq!(m.params.layers[0].weights[0], 1.0 - 0.1 * 0.5);
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut m = single(1.0);
        let before = m.clone();
        sgd_step(&mut m, &grad_of(0.0), 0.1, 0.9).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn nesterov_first_step() {
        let mut m = single(1.0);
        sgd_step(&mut m, &grad_of(1.0), 0.1, 0.9).unwrap();
        assert!((m.velocity.layers[0].weights[0] + 0.1).abs() < 1e-15);
        assert!((m.params.layers[0].weights[0] - (1.0 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient() {
        let mut m = single(1.0);
        assert!(matches!(sgd_step(&mut m, &grad_of(f64::INFINITY), 0.1, 0.9), Err(ModelError::NonFinite(_))));
    }
}
