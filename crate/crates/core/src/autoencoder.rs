//! A single denoising autoencoder with tied weights.
//!
//! The decoder matrix is never stored: decoding multiplies by the transpose
//! of the encoder matrix directly from the encoder's storage, so the two can
//! never drift apart.

use serde::{Deserialize, Serialize};

use crate::data::epoch_order;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix, Rng, Vector};
use crate::nn::{activate_grad_in_place, activate_in_place, ActivationKind, DenseLayer, Loss, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Fraction of input components forced to zero.
    pub level: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        let spec = CorruptionSpec { level, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        CorruptionSpec { level: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.level) {
            return Err(Error::arg(format!(
                "corruption level must lie in [0, 1], got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Masking noise: zeroes each component independently with probability
/// `level`, leaving the others untouched.
pub fn corrupt(x: &[f64], level: f64, rng: &mut Rng) -> Vector {
    let mut out = x.to_vec();
    corrupt_into(&mut out, level, rng);
    Vector::from_raw(out)
}

fn corrupt_into(values: &mut [f64], level: f64, rng: &mut Rng) {
    if level <= 0.0 {
        return;
    }
    for v in values.iter_mut() {
        if rng.next_f64() < level {
            *v = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoisingAutoencoder {
    /// `d' × d` encoder; its transpose is the decoder.
    pub encoder: DenseLayer,
    /// `b'`, length `d`.
    pub decoder_bias: Vector,
    pub decoder_activation: ActivationKind,
    pub corruption: CorruptionSpec,
}

/// Gradient of the reconstruction loss with respect to a DA's parameters.
/// `weights` already combines the encoder path and the transposed decoder
/// path.
#[derive(Debug, Clone, PartialEq)]
pub struct DaGrad {
    pub weights: Matrix,
    pub encoder_bias: Vector,
    pub decoder_bias: Vector,
}

impl DaGrad {
    fn zeros(hidden: usize, input: usize) -> Self {
        DaGrad {
            weights: Matrix::zeros(hidden, input),
            encoder_bias: Vector::zeros(hidden),
            decoder_bias: Vector::zeros(input),
        }
    }

    fn clear(&mut self) {
        self.weights.as_mut_slice().fill(0.0);
        self.encoder_bias.as_mut_slice().fill(0.0);
        self.decoder_bias.as_mut_slice().fill(0.0);
    }

    fn is_finite(&self) -> bool {
        self.weights.is_finite()
            && self.encoder_bias.iter().all(|v| v.is_finite())
            && self.decoder_bias.iter().all(|v| v.is_finite())
    }
}

/// Decoder activation for a DA whose reconstruction targets are produced by
/// `source` (`None` for raw `[0,1]` inputs). Targets confined to `[0,1]` get a
/// sigmoid decoder with cross-entropy; anything else gets a linear decoder
/// with squared error.
pub fn decoder_activation_for(source: Option<ActivationKind>) -> ActivationKind {
    match source {
        None => ActivationKind::Sigmoid,
        Some(kind) if kind.is_unit_bounded() => ActivationKind::Sigmoid,
        Some(_) => ActivationKind::Linear,
    }
}

impl DenoisingAutoencoder {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        encoder_activation: ActivationKind,
        decoder_activation: ActivationKind,
        corruption: CorruptionSpec,
        rng: &mut Rng,
    ) -> Result<Self> {
        if encoder_activation == ActivationKind::Softmax {
            return Err(Error::Contract("softmax cannot be a hidden activation".into()));
        }
        Loss::for_decoder(decoder_activation)?;
        corruption.validate()?;
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::arg("autoencoder dimensions must be positive"));
        }
        Ok(DenoisingAutoencoder {
            encoder: DenseLayer::init(input_dim, hidden_dim, encoder_activation, rng),
            decoder_bias: Vector::zeros(input_dim),
            decoder_activation,
            corruption,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn is_tied(&self) -> bool {
        true
    }

    pub fn loss_kind(&self) -> Loss {
        Loss::for_decoder(self.decoder_activation).expect("validated at construction")
    }

    /// Effective decoder matrix `Wᵀ`, materialized for inspection only.
    pub fn decoder_weights(&self) -> Matrix {
        self.encoder.weights.transpose()
    }

    /// Clean code `y = s(W·x + b)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vector> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, y: &[f64]) -> Result<Vector> {
        let mut z = self.encoder.weights.matvec_transposed(y)?;
        axpy(1.0, &self.decoder_bias, z.as_mut_slice());
        activate_in_place(self.decoder_activation, z.as_mut_slice());
        Ok(z)
    }

    /// `(y, z)` for an already-corrupted input.
    pub fn forward(&self, x_tilde: &[f64]) -> Result<(Vector, Vector)> {
        if x_tilde.len() != self.input_dim() {
            return Err(Error::shape("da_forward", self.input_dim(), x_tilde.len()));
        }
        let y = self.encode(x_tilde)?;
        let z = self.decode(&y)?;
        Ok((y, z))
    }

    pub fn reconstruction_loss(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.loss_kind().value(z, crate::nn::Target::Values(x))
    }

    /// Loss against the clean `x` and its gradient, for input `x_tilde`.
    pub fn gradient(&self, x_tilde: &[f64], x: &[f64]) -> Result<(f64, DaGrad)> {
        let mut grad = DaGrad::zeros(self.hidden_dim(), self.input_dim());
        let loss = self.accumulate_gradient(x_tilde, x, &mut grad, 1.0)?;
        Ok((loss, grad))
    }

    fn accumulate_gradient(&self, x_tilde: &[f64], x: &[f64], grad: &mut DaGrad, scale: f64) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("da target", self.input_dim(), x.len()));
        }
        let (y, z) = self.forward(x_tilde)?;
        let loss = self.reconstruction_loss(x, &z)?;

        // Sigmoid+cross-entropy and linear+squared-error both give z − x.
        let dz: Vec<f64> = z.iter().zip(x).map(|(z, x)| z - x).collect();
        let w = &self.encoder.weights;
        let mut dy: Vec<f64> = (0..self.hidden_dim()).map(|i| dot(w.row(i), &dz)).collect();
        let mut slope = y.as_slice().to_vec();
        activate_grad_in_place(self.encoder.activation, &mut slope)?;
        dy.iter_mut().zip(&slope).for_each(|(d, s)| *d *= s);

        // ∂L/∂W[i][j] = y_i·dz_j (decoder, transposed) + dy_i·x̃_j (encoder)
        for i in 0..self.hidden_dim() {
            let a = scale * y[i];
            let b = scale * dy[i];
            let row = grad.weights.row_mut(i);
            for ((g, &dzj), &xj) in row.iter_mut().zip(&dz).zip(x_tilde) {
                *g += a * dzj + b * xj;
            }
        }
        axpy(scale, &dy, grad.encoder_bias.as_mut_slice());
        axpy(scale, &dz, grad.decoder_bias.as_mut_slice());
        Ok(loss)
    }

    fn apply(&mut self, grad: &DaGrad, learning_rate: f64) {
        axpy(
            -learning_rate,
            grad.weights.as_slice(),
            self.encoder.weights.as_mut_slice(),
        );
        axpy(-learning_rate, &grad.encoder_bias, self.encoder.bias.as_mut_slice());
        axpy(-learning_rate, &grad.decoder_bias, self.decoder_bias.as_mut_slice());
    }

    /// Minibatch SGD on the reconstruction loss of fresh corruptions of
    /// `inputs`. Batch gradients are averaged. Returns the mean per-example
    /// loss of every epoch.
    pub fn train(&mut self, inputs: &[Vector], cfg: &SgdConfig) -> Result<Vec<f64>> {
        self.train_with(inputs, cfg, |_| Ok(()))
    }

    /// As [`train`](Self::train), calling `before_epoch` ahead of every epoch;
    /// an error from it stops training.
    pub fn train_with(
        &mut self,
        inputs: &[Vector],
        cfg: &SgdConfig,
        mut before_epoch: impl FnMut(usize) -> Result<()>,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if inputs.is_empty() {
            return Err(Error::arg("cannot train an autoencoder on zero inputs"));
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::shape("train_da", self.input_dim(), bad.len()));
        }
        if self.decoder_activation == ActivationKind::Sigmoid {
            if let Some(i) = inputs.iter().position(|x| x.iter().any(|v| !(0.0..=1.0).contains(v))) {
                return Err(Error::arg(format!(
                    "input {i} leaves [0, 1]; a sigmoid decoder needs unit-range targets"
                )));
            }
        }

        let mut noise = Rng::new(self.corruption.seed);
        let mut grad = DaGrad::zeros(self.hidden_dim(), self.input_dim());
        let mut scratch = vec![0.0; self.input_dim()];
        let mut trace = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            before_epoch(epoch)?;
            let order = epoch_order(inputs.len(), cfg.seed, epoch);
            let mut epoch_loss = 0.0;
            for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                grad.clear();
                let scale = 1.0 / batch.len() as f64;
                let mut batch_loss = 0.0;
                for &k in batch {
                    let x = inputs[k].as_slice();
                    scratch.copy_from_slice(x);
                    corrupt_into(&mut scratch, self.corruption.level, &mut noise);
                    batch_loss += self.accumulate_gradient(&scratch, x, &mut grad, scale)?;
                }
                if !batch_loss.is_finite() || !grad.is_finite() {
                    return Err(Error::NonFinite {
                        what: "reconstruction loss",
                        phase: "autoencoder training".into(),
                        epoch,
                        batch: b,
                    });
                }
                epoch_loss += batch_loss;
                if cfg.learning_rate != 0.0 {
                    self.apply(&grad, cfg.learning_rate);
                }
            }
            trace.push(epoch_loss / inputs.len() as f64);
        }
        Ok(trace)
    }
}

/// Trains a copy of `da` and returns it with its per-epoch loss trace.
pub fn train_da(
    da: &DenoisingAutoencoder,
    inputs: &[Vector],
    cfg: &SgdConfig,
) -> Result<(DenoisingAutoencoder, Vec<f64>)> {
    let mut trained = da.clone();
    let trace = trained.train(inputs, cfg)?;
    Ok((trained, trace))
}
