//! Activations, losses, dense layers, backpropagation and the plain SGD update
//! shared by the autoencoders and the supervised network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix, Rng, Vector};

/// Probability clamp used by both losses.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
    Softmax,
    Linear,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Relu => "relu",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Linear => "linear",
        }
    }

    /// Whether every output lies in `[0, 1]`.
    pub fn is_unit_bounded(self) -> bool {
        matches!(self, ActivationKind::Sigmoid | ActivationKind::Softmax)
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::Relu),
            "softmax" => Ok(ActivationKind::Softmax),
            "linear" => Ok(ActivationKind::Linear),
            other => Err(Error::arg(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies `kind` in place. Softmax subtracts the max logit first so that
/// logits in the hundreds stay finite.
pub fn activate_in_place(kind: ActivationKind, values: &mut [f64]) {
    match kind {
        ActivationKind::Sigmoid => values.iter_mut().for_each(|v| *v = sigmoid(*v)),
        ActivationKind::Tanh => values.iter_mut().for_each(|v| *v = v.tanh()),
        ActivationKind::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
        ActivationKind::Linear => {}
        ActivationKind::Softmax => {
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in values.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            values.iter_mut().for_each(|v| *v /= sum);
        }
    }
}

pub fn activate(kind: ActivationKind, pre: &[f64]) -> Vector {
    let mut out = pre.to_vec();
    activate_in_place(kind, &mut out);
    Vector::from_raw(out)
}

/// Elementwise derivative written in terms of the activation's output.
/// Softmax has no standalone form here; its gradient is fused with the NLL loss.
pub fn activate_grad(kind: ActivationKind, out: &[f64]) -> Result<Vector> {
    let mut g = out.to_vec();
    activate_grad_in_place(kind, &mut g)?;
    Ok(Vector::from_raw(g))
}

pub(crate) fn activate_grad_in_place(kind: ActivationKind, values: &mut [f64]) -> Result<()> {
    match kind {
        ActivationKind::Sigmoid => values.iter_mut().for_each(|o| *o *= 1.0 - *o),
        ActivationKind::Tanh => values.iter_mut().for_each(|o| *o = 1.0 - *o * *o),
        // Subgradient 0 at the kink.
        ActivationKind::Relu => values.iter_mut().for_each(|o| *o = if *o > 0.0 { 1.0 } else { 0.0 }),
        ActivationKind::Linear => values.iter_mut().for_each(|o| *o = 1.0),
        ActivationKind::Softmax => {
            return Err(Error::Contract(
                "softmax derivative is only available fused with the NLL loss (delta = probs - one_hot)".into(),
            ))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: ActivationKind,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vector, activation: ActivationKind) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape("DenseLayer::new", weights.rows(), bias.len()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform fan-in/fan-out initialization with zero biases. Sigmoid layers
    /// use a 4x wider interval.
    pub fn init(fan_in: usize, fan_out: usize, activation: ActivationKind, rng: &mut Rng) -> Self {
        let mut bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        if activation == ActivationKind::Sigmoid {
            bound *= 4.0;
        }
        let weights = Matrix::from_fn(fan_out, fan_in, |_, _| {
            rng.uniform(-bound, bound).expect("bound is positive")
        });
        DenseLayer {
            weights,
            bias: Vector::zeros(fan_out),
            activation,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: ActivationKind) -> Self {
        DenseLayer {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: Vector::zeros(fan_out),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Returns `(W·x + b, s(W·x + b))`.
    pub fn affine_forward(&self, input: &[f64]) -> Result<(Vector, Vector)> {
        let mut pre = self.weights.matvec(input)?;
        axpy(1.0, &self.bias, pre.as_mut_slice());
        let out = activate(self.activation, &pre);
        Ok((pre, out))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vector> {
        let mut out = self.weights.matvec(input)?;
        axpy(1.0, &self.bias, out.as_mut_slice());
        activate_in_place(self.activation, out.as_mut_slice());
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero is allowed: a frozen run is a useful control.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::arg(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// `L_H(x, z) = -Σ [x ln z + (1 - x) ln(1 - z)]` with `z` clamped to
/// `[ε, 1 - ε]`.
pub fn cross_entropy_recon(x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::shape("cross_entropy_recon", x.len(), z.len()));
    }
    let mut loss = 0.0;
    for (&xk, &zk) in x.iter().zip(z) {
        // Clamp each log argument at ε so saturated units stay finite, and skip
        // exact-zero weights so a perfect reconstruction costs exactly 0.
        if xk != 0.0 {
            loss -= xk * zk.max(PROB_EPS).ln();
        }
        if xk != 1.0 {
            loss -= (1.0 - xk) * (1.0 - zk).max(PROB_EPS).ln();
        }
    }
    Ok(loss)
}

/// `½‖x − z‖²`, the reconstruction loss paired with a linear decoder.
pub fn squared_error(x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::shape("squared_error", x.len(), z.len()));
    }
    Ok(0.5 * x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

pub fn nll_loss(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::arg(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    Ok(-probs[label].max(PROB_EPS).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Softmax output with negative log-likelihood.
    SoftmaxNll,
    /// Sigmoid output with cross-entropy against a `[0,1]` target.
    CrossEntropy,
    /// Linear output with `½‖x − z‖²`.
    SquaredError,
}

impl Loss {
    fn output_activation(self) -> ActivationKind {
        match self {
            Loss::SoftmaxNll => ActivationKind::Softmax,
            Loss::CrossEntropy => ActivationKind::Sigmoid,
            Loss::SquaredError => ActivationKind::Linear,
        }
    }

    /// Reconstruction loss matched to a decoder activation.
    pub fn for_decoder(activation: ActivationKind) -> Result<Loss> {
        match activation {
            ActivationKind::Sigmoid => Ok(Loss::CrossEntropy),
            ActivationKind::Linear => Ok(Loss::SquaredError),
            other => Err(Error::Contract(format!(
                "no reconstruction loss is paired with a {other} decoder"
            ))),
        }
    }

    pub fn value(self, output: &[f64], target: Target<'_>) -> Result<f64> {
        match (self, target) {
            (Loss::SoftmaxNll, Target::Label(label)) => nll_loss(output, label),
            (Loss::CrossEntropy, Target::Values(x)) => cross_entropy_recon(x, output),
            (Loss::SquaredError, Target::Values(x)) => squared_error(x, output),
            (loss, target) => Err(Error::Contract(format!(
                "{loss:?} cannot be evaluated against a {} target",
                target.kind()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Label(usize),
    Values(&'a [f64]),
}

impl Target<'_> {
    fn kind(&self) -> &'static str {
        match self {
            Target::Label(_) => "class label",
            Target::Values(_) => "reconstruction",
        }
    }
}

/// Gradient of a loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vector,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrad {
            weights: Matrix::zeros(layer.output_dim(), layer.input_dim()),
            bias: Vector::zeros(layer.output_dim()),
        }
    }

    pub(crate) fn clear(&mut self) {
        self.weights.as_mut_slice().fill(0.0);
        self.bias.as_mut_slice().fill(0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.as_mut_slice().iter_mut().for_each(|g| *g *= factor);
        self.bias.as_mut_slice().iter_mut().for_each(|g| *g *= factor);
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|g| g.is_finite())
    }
}

pub fn zero_grads(layers: &[DenseLayer]) -> Vec<LayerGrad> {
    layers.iter().map(LayerGrad::zeros_like).collect()
}

fn check_chain(layers: &[DenseLayer], input_len: usize) -> Result<()> {
    let mut width = input_len;
    for (i, layer) in layers.iter().enumerate() {
        if layer.input_dim() != width {
            return Err(Error::Shape {
                op: "backprop",
                expected: format!("layer {i} input width {width}"),
                found: format!("{}", layer.input_dim()),
            });
        }
        width = layer.output_dim();
    }
    Ok(())
}

/// Output-layer delta `∂L/∂(pre-activation)`. Every supported pairing
/// reduces to `output − target`.
fn output_delta(output: &[f64], target: Target<'_>) -> Result<Vec<f64>> {
    match target {
        Target::Label(label) => {
            if label >= output.len() {
                return Err(Error::arg(format!(
                    "label {label} out of range for {} classes",
                    output.len()
                )));
            }
            let mut delta = output.to_vec();
            delta[label] -= 1.0;
            Ok(delta)
        }
        Target::Values(x) => {
            if x.len() != output.len() {
                return Err(Error::shape("backprop target", output.len(), x.len()));
            }
            Ok(output.iter().zip(x).map(|(z, x)| z - x).collect())
        }
    }
}

/// Adds `scale · ∂L/∂θ` for one example into `grads` and returns the loss.
pub fn backprop_into(
    layers: &[DenseLayer],
    input: &[f64],
    target: Target<'_>,
    loss: Loss,
    grads: &mut [LayerGrad],
    scale: f64,
) -> Result<f64> {
    let Some(last) = layers.last() else {
        return Err(Error::arg("backprop needs at least one layer"));
    };
    if last.activation != loss.output_activation() {
        return Err(Error::Contract(format!(
            "{loss:?} requires a {} output layer, found {}",
            loss.output_activation(),
            last.activation
        )));
    }
    if let Some(i) = layers[..layers.len() - 1]
        .iter()
        .position(|l| l.activation == ActivationKind::Softmax)
    {
        return Err(Error::Contract(format!(
            "softmax is only legal on the output layer (found at layer {i})"
        )));
    }
    if grads.len() != layers.len() {
        return Err(Error::shape("backprop grads", layers.len(), grads.len()));
    }
    check_chain(layers, input.len())?;

    let mut outputs: Vec<Vector> = Vec::with_capacity(layers.len());
    for layer in layers {
        let x = outputs.last().map_or(input, |v| v.as_slice());
        let out = layer.forward(x)?;
        outputs.push(out);
    }
    let output = outputs.last().expect("nonempty");
    let value = loss.value(output, target)?;
    let mut delta = output_delta(output, target)?;

    for l in (0..layers.len()).rev() {
        let x = if l == 0 { input } else { outputs[l - 1].as_slice() };
        let g = &mut grads[l];
        if g.weights.rows() != layers[l].output_dim() || g.weights.cols() != layers[l].input_dim() {
            return Err(Error::shape(
                "backprop grads",
                format!("{}x{}", layers[l].output_dim(), layers[l].input_dim()),
                format!("{}x{}", g.weights.rows(), g.weights.cols()),
            ));
        }
        for (i, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                axpy(scale * d, x, g.weights.row_mut(i));
            }
        }
        axpy(scale, &delta, g.bias.as_mut_slice());

        if l > 0 {
            let mut prev = layers[l].weights.matvec_transposed(&delta)?.into_vec();
            let mut slope = outputs[l - 1].as_slice().to_vec();
            activate_grad_in_place(layers[l - 1].activation, &mut slope)?;
            prev.iter_mut().zip(&slope).for_each(|(p, s)| *p *= s);
            delta = prev;
        }
    }
    Ok(value)
}

/// Loss and `∂L/∂W, ∂L/∂b` for every layer, for one example.
pub fn backprop(layers: &[DenseLayer], input: &[f64], target: Target<'_>, loss: Loss) -> Result<(f64, Vec<LayerGrad>)> {
    let mut grads = zero_grads(layers);
    let value = backprop_into(layers, input, target, loss, &mut grads, 1.0)?;
    Ok((value, grads))
}

/// `p ← p − learning_rate · g` for every parameter.
pub fn sgd_step(layers: &mut [DenseLayer], grads: &[LayerGrad], learning_rate: f64) -> Result<()> {
    if layers.len() != grads.len() {
        return Err(Error::shape("sgd_step", layers.len(), grads.len()));
    }
    for (layer, g) in layers.iter().zip(grads) {
        if g.weights.rows() != layer.output_dim()
            || g.weights.cols() != layer.input_dim()
            || g.bias.len() != layer.bias.len()
        {
            return Err(Error::shape(
                "sgd_step",
                format!("{}x{}", layer.output_dim(), layer.input_dim()),
                format!("{}x{}", g.weights.rows(), g.weights.cols()),
            ));
        }
    }
    if learning_rate == 0.0 {
        return Ok(());
    }
    for (layer, g) in layers.iter_mut().zip(grads) {
        axpy(-learning_rate, g.weights.as_slice(), layer.weights.as_mut_slice());
        axpy(-learning_rate, &g.bias, layer.bias.as_mut_slice());
    }
    Ok(())
}
