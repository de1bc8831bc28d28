//! Greedy layer-wise pre-training of a stack of denoising autoencoders,
//! unrolling into a softmax classifier, and supervised fine-tuning.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{decoder_activation_for, CorruptionSpec, DenoisingAutoencoder};
use crate::data::{epoch_order, Dataset, LabeledSet, SplitTag};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{derive_seed, Rng, Vector};
use crate::nn::{backprop_into, sgd_step, zero_grads, ActivationKind, DenseLayer, Loss, SgdConfig, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    /// Only the first DA sees corrupted inputs.
    FirstLayerOnly,
    /// Every DA corrupts its own inputs.
    EveryLayer,
}

impl CorruptionMode {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionMode::FirstLayerOnly => "first-layer-only",
            CorruptionMode::EveryLayer => "every-layer",
        }
    }
}

impl std::fmt::Display for CorruptionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CorruptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-layer-only" => Ok(CorruptionMode::FirstLayerOnly),
            "every-layer" => Ok(CorruptionMode::EveryLayer),
            other => Err(Error::arg(format!("unknown corruption mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub n_classes: usize,
    pub corruption: CorruptionSpec,
    pub corruption_mode: CorruptionMode,
}

impl StackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::arg("hidden_dims must name at least one layer"));
        }
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::arg("layer widths must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::arg("n_classes must be at least 2"));
        }
        if self.hidden_activation == ActivationKind::Softmax {
            return Err(Error::arg("softmax is only allowed on the output layer"));
        }
        self.corruption.validate()
    }

    pub fn layer_input_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.input_dim
        } else {
            self.hidden_dims[k - 1]
        }
    }

    /// Corruption applied by the `k`-th DA (0-based).
    pub fn layer_corruption(&self, k: usize) -> CorruptionSpec {
        let level = match (self.corruption_mode, k) {
            (CorruptionMode::FirstLayerOnly, k) if k > 0 => 0.0,
            _ => self.corruption.level,
        };
        CorruptionSpec {
            level,
            seed: derive_seed(self.corruption.seed, &format!("corruption-layer-{k}")),
        }
    }

    /// The untrained `k`-th DA as `pretrain` creates it.
    pub fn initial_da(&self, k: usize, pretrain: &SgdConfig) -> Result<DenoisingAutoencoder> {
        let source = if k == 0 { None } else { Some(self.hidden_activation) };
        let mut rng = Rng::new(derive_seed(pretrain.seed, &format!("da-init-{k}")));
        DenoisingAutoencoder::new(
            self.layer_input_dim(k),
            self.hidden_dims[k],
            self.hidden_activation,
            decoder_activation_for(source),
            self.layer_corruption(k),
            &mut rng,
        )
    }

    /// SGD settings for the `k`-th DA: `pretrain` with a per-layer shuffle seed.
    pub fn layer_sgd(&self, k: usize, pretrain: &SgdConfig) -> SgdConfig {
        SgdConfig {
            seed: derive_seed(pretrain.seed, &format!("da-order-{k}")),
            ..pretrain.clone()
        }
    }
}

/// Wall-clock guard checked at epoch boundaries.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    start: Instant,
    limit: Option<Duration>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget {
            start: Instant::now(),
            limit: None,
        }
    }

    pub fn new(limit: Option<Duration>) -> Self {
        Budget {
            start: Instant::now(),
            limit,
        }
    }

    pub fn check(&self) -> Result<()> {
        if let Some(limit) = self.limit {
            let elapsed = self.start.elapsed();
            if elapsed > limit {
                return Err(Error::BudgetExceeded {
                    budget_s: limit.as_secs_f64(),
                    elapsed_s: elapsed.as_secs_f64(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedStack {
    pub das: Vec<DenoisingAutoencoder>,
    /// Per-layer, per-epoch mean reconstruction loss.
    pub traces: Vec<Vec<f64>>,
}

pub fn pretrain(spec: &StackSpec, unlabeled: &[Vector], cfg: &SgdConfig) -> Result<PretrainedStack> {
    pretrain_within(spec, unlabeled, cfg, &Budget::unlimited())
}

/// DA `k` trains on the clean codes of DAs `0..k` applied to `unlabeled`.
pub fn pretrain_within(
    spec: &StackSpec,
    unlabeled: &[Vector],
    cfg: &SgdConfig,
    budget: &Budget,
) -> Result<PretrainedStack> {
    spec.validate()?;
    cfg.validate()?;
    if let Some(bad) = unlabeled.iter().find(|x| x.len() != spec.input_dim) {
        return Err(Error::shape("pretrain", spec.input_dim, bad.len()));
    }
    let mut das = Vec::with_capacity(spec.hidden_dims.len());
    let mut traces = Vec::with_capacity(spec.hidden_dims.len());
    let mut inputs: Vec<Vector> = unlabeled.to_vec();
    for k in 0..spec.hidden_dims.len() {
        budget.check()?;
        let mut da = spec.initial_da(k, cfg)?;
        let layer_cfg = spec.layer_sgd(k, cfg);
        let trace = da.train_with(&inputs, &layer_cfg, |_| budget.check())?;
        if k + 1 < spec.hidden_dims.len() {
            inputs = Exec::default()
                .map(&inputs, |x| da.encode(x))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
        }
        das.push(da);
        traces.push(trace);
    }
    Ok(PretrainedStack { das, traces })
}

/// The unrolled SDA: hidden encoder layers followed by one softmax layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedNet {
    layers: Vec<DenseLayer>,
}

impl SupervisedNet {
    /// Checks that shapes chain, the last layer is softmax, and the hidden
    /// layers share one non-softmax activation. Zero hidden layers is allowed
    /// here (plain logistic regression).
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::arg("a supervised net needs an output layer"));
        };
        if last.activation != ActivationKind::Softmax {
            return Err(Error::arg(format!(
                "output layer must be softmax, found {}",
                last.activation
            )));
        }
        let hidden = &layers[..layers.len() - 1];
        if let Some(first) = hidden.first() {
            if first.activation == ActivationKind::Softmax {
                return Err(Error::arg("softmax is only allowed on the output layer"));
            }
            if let Some(i) = hidden.iter().position(|l| l.activation != first.activation) {
                return Err(Error::arg(format!(
                    "hidden layer {i} uses {} but layer 0 uses {}",
                    hidden[i].activation, first.activation
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape {
                    op: "SupervisedNet::from_layers",
                    expected: format!("layer {} input width {}", i + 1, pair[0].output_dim()),
                    found: format!("{}", pair[1].input_dim()),
                });
            }
        }
        if last.output_dim() < 2 {
            return Err(Error::arg("the output layer needs at least 2 classes"));
        }
        Ok(SupervisedNet { layers })
    }

    /// Fresh random initialization of the architecture in `spec`.
    pub fn random(spec: &StackSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.hidden_dims.len() + 1);
        for (k, &width) in spec.hidden_dims.iter().enumerate() {
            layers.push(DenseLayer::init(
                spec.layer_input_dim(k),
                width,
                spec.hidden_activation,
                rng,
            ));
        }
        let last = *spec.hidden_dims.last().expect("validated");
        layers.push(DenseLayer::init(last, spec.n_classes, ActivationKind::Softmax, rng));
        SupervisedNet::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("nonempty").output_dim()
    }

    pub fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    /// Outputs of the hidden stack (the input itself when there is none).
    pub fn hidden_forward(&self, x: &[f64]) -> Result<Vector> {
        let mut h = Vector::new(x.to_vec())?;
        for layer in &self.layers[..self.layers.len() - 1] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Class probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("predict", self.input_dim(), x.len()));
        }
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Argmax of `predict`, lowest index on ties.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict(x)?.argmax())
    }

    fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }
}

/// Copies each DA's encoder verbatim under a freshly initialized softmax layer.
pub fn unroll(das: &[DenoisingAutoencoder], spec: &StackSpec, rng: &mut Rng) -> Result<SupervisedNet> {
    spec.validate()?;
    if das.len() != spec.hidden_dims.len() {
        return Err(Error::shape("unroll", spec.hidden_dims.len(), das.len()));
    }
    for (k, da) in das.iter().enumerate() {
        if da.input_dim() != spec.layer_input_dim(k) || da.hidden_dim() != spec.hidden_dims[k] {
            return Err(Error::Shape {
                op: "unroll",
                expected: format!("layer {k}: {}→{}", spec.layer_input_dim(k), spec.hidden_dims[k]),
                found: format!("{}→{}", da.input_dim(), da.hidden_dim()),
            });
        }
        if da.encoder.activation != spec.hidden_activation {
            return Err(Error::arg(format!(
                "DA {k} uses {} but the stack expects {}",
                da.encoder.activation, spec.hidden_activation
            )));
        }
    }
    let mut layers: Vec<DenseLayer> = das.iter().map(|da| da.encoder.clone()).collect();
    let last = *spec.hidden_dims.last().expect("validated");
    layers.push(DenseLayer::init(last, spec.n_classes, ActivationKind::Softmax, rng));
    SupervisedNet::from_layers(layers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub sgd: SgdConfig,
    /// Epochs without a validation improvement larger than `min_delta`
    /// before stopping.
    pub patience: usize,
    pub min_delta: f64,
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.patience == 0 {
            return Err(Error::arg("patience must be at least 1"));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return Err(Error::arg("min_delta must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    /// Snapshot with the lowest validation error.
    pub net: SupervisedNet,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl FinetuneOutcome {
    pub fn epochs_ran(&self) -> usize {
        self.history.len()
    }

    pub fn best_valid_error(&self) -> f64 {
        self.history[self.best_epoch].valid_error
    }
}

pub fn finetune(
    net: SupervisedNet,
    train: &LabeledSet,
    valid: &LabeledSet,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    finetune_within(net, train, valid, cfg, &Budget::unlimited())
}

/// Minibatch SGD on softmax-NLL through every layer. Batch gradients are
/// averaged.
pub fn finetune_within(
    net: SupervisedNet,
    train: &LabeledSet,
    valid: &LabeledSet,
    cfg: &FinetuneConfig,
    budget: &Budget,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::arg("fine-tuning needs nonempty train and validation sets"));
    }
    for set in [train, valid] {
        if set.dim() != net.input_dim() {
            return Err(Error::shape("finetune", net.input_dim(), set.dim()));
        }
        if let Some(&l) = set.labels.iter().find(|&&l| l >= net.n_classes()) {
            return Err(Error::arg(format!(
                "label {l} out of range for {} classes",
                net.n_classes()
            )));
        }
    }

    let mut layers = net.into_layers();
    let mut grads = zero_grads(&layers);
    let mut best: Option<(SupervisedNet, usize, f64)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 0..cfg.sgd.epochs {
        budget.check()?;
        let order = epoch_order(train.len(), cfg.sgd.seed, epoch);
        let mut total_loss = 0.0;
        for (b, batch) in order.chunks(cfg.sgd.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| g.clear());
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &k in batch {
                batch_loss += backprop_into(
                    &layers,
                    &train.samples[k],
                    Target::Label(train.labels[k]),
                    Loss::SoftmaxNll,
                    &mut grads,
                    scale,
                )?;
            }
            if !batch_loss.is_finite() || !grads.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "loss",
                    phase: "fine-tuning".into(),
                    epoch,
                    batch: b,
                });
            }
            total_loss += batch_loss;
            sgd_step(&mut layers, &grads, cfg.sgd.learning_rate)?;
        }

        let current = SupervisedNet { layers };
        if !current.is_finite() {
            return Err(Error::NonFinite {
                what: "parameter",
                phase: "fine-tuning".into(),
                epoch,
                batch: order.len().div_ceil(cfg.sgd.batch_size),
            });
        }
        let valid_error = evaluate(&current, valid)?.error_rate;
        history.push(EpochRecord {
            epoch,
            train_loss: total_loss / train.len() as f64,
            valid_error,
        });

        let improved = match &best {
            None => true,
            Some((_, _, err)) => valid_error < err - cfg.min_delta,
        };
        if improved {
            best = Some((current.clone(), epoch, valid_error));
            since_best = 0;
        } else {
            since_best += 1;
        }
        layers = current.into_layers();
        if since_best >= cfg.patience {
            break;
        }
    }

    let (net, best_epoch, _) = best.expect("at least one epoch ran");
    Ok(FinetuneOutcome {
        net,
        best_epoch,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub error_rate: f64,
    pub total: usize,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::arg("cannot evaluate on an empty set"));
        }
        if labels.len() != predicted.len() {
            return Err(Error::shape("evaluate", labels.len(), predicted.len()));
        }
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        let mut wrong = 0;
        for (&t, &p) in labels.iter().zip(predicted) {
            confusion[t][p] += 1;
            if t != p {
                wrong += 1;
            }
        }
        Ok(Evaluation {
            error_rate: wrong as f64 / labels.len() as f64,
            total: labels.len(),
            confusion,
        })
    }

    pub fn error_pct(&self) -> f64 {
        100.0 * self.error_rate
    }
}

pub fn evaluate(net: &SupervisedNet, data: &LabeledSet) -> Result<Evaluation> {
    evaluate_with(net, data, Exec::default())
}

pub fn evaluate_with(net: &SupervisedNet, data: &LabeledSet, exec: Exec) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty set"));
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l >= net.n_classes()) {
        return Err(Error::arg(format!(
            "label {l} out of range for {} classes",
            net.n_classes()
        )));
    }
    let predicted = exec
        .map(&data.samples, |x| net.classify(x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_predictions(&data.labels, &predicted, net.n_classes())
}

/// Everything needed to go from a dataset to an evaluated classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stack: StackSpec,
    pub pretrain: SgdConfig,
    pub finetune: FinetuneConfig,
    /// `false` skips pre-training and fine-tunes a randomly initialized net.
    pub pretrain_enabled: bool,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub stack: Option<PretrainedStack>,
    pub finetune: FinetuneOutcome,
    pub valid: Evaluation,
    pub test: Option<Evaluation>,
}

/// pretrain → unroll → finetune → evaluate on the splits of `data`.
pub fn run_pipeline(cfg: &PipelineConfig, data: &Dataset, budget: &Budget) -> Result<PipelineOutcome> {
    let train = data.subset(SplitTag::Train);
    let valid = data.subset(SplitTag::Valid);
    let mut rng = Rng::new(cfg.init_seed);
    let (stack, net) = if cfg.pretrain_enabled {
        let stack = pretrain_within(&cfg.stack, &train.samples, &cfg.pretrain, budget)?;
        let net = unroll(&stack.das, &cfg.stack, &mut rng)?;
        (Some(stack), net)
    } else {
        (None, SupervisedNet::random(&cfg.stack, &mut rng)?)
    };
    let outcome = finetune_within(net, &train, &valid, &cfg.finetune, budget)?;
    let valid_eval = evaluate(&outcome.net, &valid)?;
    let test = if data.count(SplitTag::Test) > 0 {
        Some(evaluate(&outcome.net, &data.subset(SplitTag::Test))?)
    } else {
        None
    };
    Ok(PipelineOutcome {
        stack,
        finetune: outcome,
        valid: valid_eval,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(hidden: Vec<usize>, act: ActivationKind) -> StackSpec {
        StackSpec {
            input_dim: 8,
            hidden_dims: hidden,
            hidden_activation: act,
            n_classes: 8,
            corruption: CorruptionSpec { level: 0.3, seed: 4 },
            corruption_mode: CorruptionMode::EveryLayer,
        }
    }

    fn sgd(lr: f64, epochs: usize) -> SgdConfig {
        SgdConfig {
            learning_rate: lr,
            batch_size: 4,
            epochs,
            seed: 12,
        }
    }

    #[test]
    fn spec_validation() {
        assert!(spec(vec![], ActivationKind::Sigmoid).validate().is_err());
        assert!(spec(vec![4], ActivationKind::Softmax).validate().is_err());
        let mut s = spec(vec![4], ActivationKind::Sigmoid);
        s.n_classes = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn first_layer_only_mode_zeroes_deeper_levels() {
        let mut s = spec(vec![4, 4, 4], ActivationKind::Sigmoid);
        s.corruption_mode = CorruptionMode::FirstLayerOnly;
        assert_eq!(s.layer_corruption(0).level, 0.3);
        assert_eq!(s.layer_corruption(1).level, 0.0);
        assert_eq!(s.layer_corruption(2).level, 0.0);
        s.corruption_mode = CorruptionMode::EveryLayer;
        assert_eq!(s.layer_corruption(2).level, 0.3);
    }

    #[test]
    fn deeper_decoders_follow_the_code_range() {
        let s = spec(vec![4, 3], ActivationKind::Tanh);
        let cfg = sgd(0.1, 1);
        assert_eq!(
            s.initial_da(0, &cfg).unwrap().decoder_activation,
            ActivationKind::Sigmoid
        );
        assert_eq!(
            s.initial_da(1, &cfg).unwrap().decoder_activation,
            ActivationKind::Linear
        );
    }

    #[test]
    fn unroll_counts_and_determinism() {
        let s = spec(vec![5], ActivationKind::Sigmoid);
        let cfg = sgd(0.1, 1);
        let das = vec![s.initial_da(0, &cfg).unwrap()];
        let a = unroll(&das, &s, &mut Rng::new(3)).unwrap();
        let b = unroll(&das, &s, &mut Rng::new(3)).unwrap();
        assert_eq!(a.layers().len(), 2);
        assert_eq!(a, b);
        assert_eq!(a.layers()[0], das[0].encoder);
        assert!(unroll(&[], &s, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn from_layers_validation() {
        let mut rng = Rng::new(0);
        let good = vec![
            DenseLayer::init(4, 3, ActivationKind::Relu, &mut rng),
            DenseLayer::init(3, 2, ActivationKind::Softmax, &mut rng),
        ];
        assert!(SupervisedNet::from_layers(good.clone()).is_ok());
        let mut bad_shape = good.clone();
        bad_shape[1] = DenseLayer::init(5, 2, ActivationKind::Softmax, &mut rng);
        assert!(SupervisedNet::from_layers(bad_shape).is_err());
        let mut bad_out = good;
        bad_out[1].activation = ActivationKind::Sigmoid;
        assert!(SupervisedNet::from_layers(bad_out).is_err());
        assert!(SupervisedNet::from_layers(vec![]).is_err());
    }

    #[test]
    fn zero_weight_net_is_uniform_and_classifies_zero() {
        let net = SupervisedNet::from_layers(vec![
            DenseLayer::zeros(4, 3, ActivationKind::Sigmoid),
            DenseLayer::zeros(3, 10, ActivationKind::Softmax),
        ])
        .unwrap();
        let p = net.predict(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(p.iter().all(|v| (v - 0.1).abs() < 1e-15));
        assert_eq!(net.classify(&[0.1, 0.2, 0.3, 0.4]).unwrap(), 0);
        assert!(net.predict(&[0.0; 3]).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let e = Evaluation::from_predictions(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap();
        assert_eq!(e.error_rate, 0.0);
        assert_eq!(e.confusion, vec![vec![2, 0], vec![0, 2]]);
        let e = Evaluation::from_predictions(&[0, 1], &[1, 0], 2).unwrap();
        assert_eq!(e.error_rate, 1.0);
        // Hand-built: one of four wrong.
        let e = Evaluation::from_predictions(&[0, 1, 2, 2], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(e.error_rate, 0.25);
        assert_eq!(e.confusion[2][1], 1);
        assert_eq!(e.confusion.iter().flatten().sum::<usize>(), 4);
        assert!(Evaluation::from_predictions(&[], &[], 2).is_err());
    }

    #[test]
    fn finetune_zero_lr_is_flat() {
        let ds = Dataset::bars(64, 8, 1).unwrap().split((0.5, 0.25, 0.25), 2).unwrap();
        let s = spec(vec![6], ActivationKind::Sigmoid);
        let net = SupervisedNet::random(&s, &mut Rng::new(5)).unwrap();
        let cfg = FinetuneConfig {
            sgd: sgd(0.0, 20),
            patience: 100,
            min_delta: 0.0,
        };
        let out = finetune(
            net.clone(),
            &ds.subset(SplitTag::Train),
            &ds.subset(SplitTag::Valid),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.history.len(), 20);
        assert!(out.history.iter().all(|h| h.valid_error == out.history[0].valid_error));
        assert_eq!(out.net, net);
    }

    #[test]
    fn finetune_label_checks() {
        let ds = Dataset::bars(16, 8, 1).unwrap().split((0.5, 0.25, 0.25), 2).unwrap();
        let mut s = spec(vec![6], ActivationKind::Sigmoid);
        s.n_classes = 4;
        let net = SupervisedNet::random(&s, &mut Rng::new(5)).unwrap();
        let cfg = FinetuneConfig {
            sgd: sgd(0.1, 2),
            patience: 1,
            min_delta: 0.0,
        };
        assert!(finetune(net, &ds.subset(SplitTag::Train), &ds.subset(SplitTag::Valid), &cfg).is_err());
    }

    #[test]
    fn budget_guard_trips() {
        let b = Budget::new(Some(Duration::from_nanos(1)));
        std::thread::sleep(Duration::from_millis(2));
        assert!(matches!(b.check(), Err(Error::BudgetExceeded { .. })));
        assert!(Budget::unlimited().check().is_ok());
    }
}
