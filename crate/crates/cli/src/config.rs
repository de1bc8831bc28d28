//! Run configuration: a TOML file, `--set key=value` overrides, then the
//! dedicated flags. Later sources win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdanet::autoencoder::CorruptionSpec;
use sdanet::baselines::BaselineSpec;
use sdanet::linalg::derive_seed;
use sdanet::nn::{ActivationKind, SgdConfig};
use sdanet::sda::{CorruptionMode, FinetuneConfig, PipelineConfig, StackSpec};
use sdanet::search::GridSpec;

use crate::args::CommonArgs;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; every other seed is derived from it.
    pub seed: u64,
    /// Output directory. Not part of the config digest.
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub stack: StackConfig,
    pub pretrain: PhaseConfig,
    pub finetune: FinetuneSection,
    pub grid: GridConfig,
    pub baselines: BaselinesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Single image/label pair, divided by `split`.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Train, valid and test fractions for a single pair.
    pub split: [f64; 3],
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub valid_images: Option<PathBuf>,
    pub valid_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub n_classes: usize,
    /// Keep only the first `limit` samples of every loaded file.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub corruption_level: f64,
    pub corruption_mode: CorruptionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub activations: Vec<ActivationKind>,
    pub layer_counts: Vec<usize>,
    pub neuron_counts: Vec<usize>,
    pub corruption_levels: Vec<f64>,
    pub corruption_modes: Vec<CorruptionMode>,
    /// Defaults to `[seed]`.
    pub seeds: Option<Vec<u64>>,
    /// Per-cell wall-time limit. Cells over it are recorded as
    /// budget-exceeded, which makes the ledger timing-dependent.
    pub budget_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesConfig {
    pub knn_k: usize,
    pub multinomial_alpha: f64,
    pub bernoulli_alpha: f64,
    pub binarize_threshold: f64,
    pub ann_hidden_dims: Vec<usize>,
    pub ann_activation: ActivationKind,
    /// SVM rows are listed as not implemented.
    pub svm_kernels: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            images: None,
            labels: None,
            split: [5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0],
            train_images: None,
            train_labels: None,
            valid_images: None,
            valid_labels: None,
            test_images: None,
            test_labels: None,
            n_classes: 10,
            limit: None,
        }
    }
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            hidden_dims: vec![200, 200],
            hidden_activation: ActivationKind::Sigmoid,
            corruption_level: 0.3,
            corruption_mode: CorruptionMode::EveryLayer,
        }
    }
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            learning_rate: 0.01,
            batch_size: 20,
            epochs: 15,
        }
    }
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            learning_rate: 0.1,
            batch_size: 20,
            epochs: 200,
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            activations: vec![ActivationKind::Sigmoid],
            layer_counts: vec![4, 5],
            neuron_counts: vec![300, 500, 700, 1000, 1500],
            corruption_levels: vec![0.3],
            corruption_modes: vec![CorruptionMode::EveryLayer],
            seeds: None,
            budget_s: None,
        }
    }
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        BaselinesConfig {
            knn_k: 3,
            multinomial_alpha: 1.0,
            bernoulli_alpha: 1.0,
            binarize_threshold: 0.5,
            ann_hidden_dims: vec![700],
            ann_activation: ActivationKind::Relu,
            svm_kernels: ["default", "linear", "rbf", "sigmoid"].map(String::from).to_vec(),
        }
    }
}

/// Parses `--set` values as TOML, falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{assignment}'")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set: malformed key '{key}'")));
    }
    let (last, parents) = path.split_last().expect("nonempty");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set: '{p}' is not a section")))?;
    }
    node.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

fn key_error(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    /// Config file, then `--set` overrides, then dedicated flags.
    pub fn resolve(args: &CommonArgs) -> CliResult<Self> {
        let mut table = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| key_error("--config", format!("cannot read '{}': {e}", path.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| key_error("--config", format!("'{}' is not valid TOML: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for assignment in &args.set {
            apply_override(&mut table, assignment)?;
        }
        let mut cfg = Self::from_table(table)?;

        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &args.out {
            cfg.out = Some(out.clone());
        }
        let d = &mut cfg.data;
        for (flag, slot) in [
            (&args.images, &mut d.images),
            (&args.labels, &mut d.labels),
            (&args.train_images, &mut d.train_images),
            (&args.train_labels, &mut d.train_labels),
            (&args.valid_images, &mut d.valid_images),
            (&args.valid_labels, &mut d.valid_labels),
            (&args.test_images, &mut d.test_images),
            (&args.test_labels, &mut d.test_labels),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table) -> CliResult<Self> {
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(e.inner().to_string())
            } else {
                key_error(&path, e.inner())
            }
        })
    }

    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let table = toml::from_str::<toml::Table>(text).map_err(|e| key_error("config", e))?;
        let cfg = Self::from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every value before any work starts; messages name the key.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        if d.n_classes < 2 || d.n_classes > 256 {
            return Err(key_error("data.n_classes", "must be between 2 and 256"));
        }
        if d.split.iter().any(|f| f.is_nan() || *f <= 0.0) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(key_error("data.split", "fractions must be positive and sum to 1"));
        }
        if d.limit == Some(0) {
            return Err(key_error("data.limit", "must be at least 1"));
        }
        for (key, a, b) in [
            ("data.images", &d.images, &d.labels),
            ("data.train_images", &d.train_images, &d.train_labels),
            ("data.valid_images", &d.valid_images, &d.valid_labels),
            ("data.test_images", &d.test_images, &d.test_labels),
        ] {
            if a.is_some() != b.is_some() {
                let labels_key = key.replace("images", "labels");
                return Err(key_error(
                    if a.is_some() { &labels_key } else { key },
                    format!("{key} and {labels_key} must be given together"),
                ));
            }
        }
        if d.images.is_some() && (d.train_images.is_some() || d.valid_images.is_some() || d.test_images.is_some()) {
            return Err(key_error(
                "data.images",
                "give either one image/label pair or per-split pairs, not both",
            ));
        }

        let s = &self.stack;
        if s.hidden_dims.is_empty() || s.hidden_dims.contains(&0) {
            return Err(key_error("stack.hidden_dims", "needs at least one positive width"));
        }
        if s.hidden_activation == ActivationKind::Softmax {
            return Err(key_error(
                "stack.hidden_activation",
                "softmax is reserved for the output layer",
            ));
        }
        if !(0.0..1.0).contains(&s.corruption_level) {
            return Err(key_error("stack.corruption_level", "must lie in [0, 1)"));
        }

        check_phase(
            "pretrain",
            self.pretrain.learning_rate,
            self.pretrain.batch_size,
            self.pretrain.epochs,
        )?;
        let f = &self.finetune;
        check_phase("finetune", f.learning_rate, f.batch_size, f.epochs)?;
        if f.patience == 0 {
            return Err(key_error("finetune.patience", "must be at least 1"));
        }
        if f.min_delta.is_nan() || f.min_delta < 0.0 {
            return Err(key_error("finetune.min_delta", "must be non-negative"));
        }

        self.grid_spec().validate().map_err(|e| key_error("grid", e))?;

        let b = &self.baselines;
        if b.knn_k == 0 {
            return Err(key_error("baselines.knn_k", "must be at least 1"));
        }
        for (key, alpha) in [
            ("baselines.multinomial_alpha", b.multinomial_alpha),
            ("baselines.bernoulli_alpha", b.bernoulli_alpha),
        ] {
            if !alpha.is_finite() || alpha <= 0.0 {
                return Err(key_error(key, "must be a positive number"));
            }
        }
        if !b.binarize_threshold.is_finite() {
            return Err(key_error("baselines.binarize_threshold", "must be finite"));
        }
        if b.ann_hidden_dims.contains(&0) {
            return Err(key_error("baselines.ann_hidden_dims", "widths must be positive"));
        }
        if b.ann_activation == ActivationKind::Softmax {
            return Err(key_error(
                "baselines.ann_activation",
                "softmax is reserved for the output layer",
            ));
        }
        Ok(())
    }

    /// SHA-256 over the resolved configuration, excluding the output
    /// directory.
    pub fn digest(&self) -> String {
        let canonical = RunConfig {
            out: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    pub fn stack_spec(&self, input_dim: usize, n_classes: usize) -> StackSpec {
        StackSpec {
            input_dim,
            hidden_dims: self.stack.hidden_dims.clone(),
            hidden_activation: self.stack.hidden_activation,
            n_classes,
            corruption: CorruptionSpec {
                level: self.stack.corruption_level,
                seed: derive_seed(self.seed, "corruption"),
            },
            corruption_mode: self.stack.corruption_mode,
        }
    }

    pub fn pretrain_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.pretrain.learning_rate,
            batch_size: self.pretrain.batch_size,
            epochs: self.pretrain.epochs,
            seed: derive_seed(self.seed, "pretrain"),
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        let f = &self.finetune;
        FinetuneConfig {
            sgd: SgdConfig {
                learning_rate: f.learning_rate,
                batch_size: f.batch_size,
                epochs: f.epochs,
                seed: derive_seed(self.seed, "finetune"),
            },
            patience: f.patience,
            min_delta: f.min_delta,
        }
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init")
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            activations: g.activations.clone(),
            layer_counts: g.layer_counts.clone(),
            neuron_counts: g.neuron_counts.clone(),
            corruption_levels: g.corruption_levels.clone(),
            corruption_modes: g.corruption_modes.clone(),
            seeds: g.seeds.clone().unwrap_or_else(|| vec![self.seed]),
            pretrain: self.pretrain_sgd(),
            finetune: self.finetune_config(),
            budget_s: g.budget_s,
        }
    }

    /// The suite in table order.
    pub fn baseline_specs(&self, input_dim: usize, n_classes: usize) -> Vec<BaselineSpec> {
        let b = &self.baselines;
        let mut specs = vec![
            BaselineSpec::LogisticRegression {
                finetune: self.finetune_config(),
                init_seed: derive_seed(self.seed, "logistic-init"),
            },
            BaselineSpec::KNearest { k: b.knn_k },
            BaselineSpec::NearestCentroid,
            BaselineSpec::GaussianNb,
            BaselineSpec::MultinomialNb {
                alpha: b.multinomial_alpha,
            },
            BaselineSpec::BernoulliNb {
                alpha: b.bernoulli_alpha,
                binarize_threshold: b.binarize_threshold,
            },
        ];
        specs.extend(b.svm_kernels.iter().map(|k| BaselineSpec::Svm { kernel: k.clone() }));
        if !b.ann_hidden_dims.is_empty() {
            specs.push(BaselineSpec::Ann {
                pipeline: PipelineConfig {
                    stack: StackSpec {
                        hidden_dims: b.ann_hidden_dims.clone(),
                        hidden_activation: b.ann_activation,
                        corruption: CorruptionSpec::none(),
                        ..self.stack_spec(input_dim, n_classes)
                    },
                    pretrain: self.pretrain_sgd(),
                    finetune: self.finetune_config(),
                    pretrain_enabled: false,
                    init_seed: derive_seed(self.seed, "ann-init"),
                },
            });
        }
        specs
    }
}

fn check_phase(section: &str, lr: f64, batch: usize, epochs: usize) -> CliResult<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(key_error(
            &format!("{section}.learning_rate"),
            "must be a finite non-negative number",
        ));
    }
    if batch == 0 {
        return Err(key_error(&format!("{section}.batch_size"), "must be at least 1"));
    }
    if epochs == 0 {
        return Err(key_error(&format!("{section}.epochs"), "must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml_str("[pretrain]\nlearning_rat = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rat"), "{msg}");
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_toml_str("[stack]\nhidden_activation = \"swish\"\n").unwrap_err();
        assert!(err.to_string().contains("stack.hidden_activation"), "{err}");
    }

    #[test]
    fn invalid_values_name_their_key() {
        let err = RunConfig::from_toml_str("[finetune]\npatience = 0\n").unwrap_err();
        assert!(err.to_string().contains("finetune.patience"));
        let err = RunConfig::from_toml_str("[data]\nimages = \"a\"\n").unwrap_err();
        assert!(err.to_string().contains("data.labels"));
    }

    #[test]
    fn overrides_and_flags_win() {
        let mut table = toml::from_str::<toml::Table>("seed = 3\n[pretrain]\nepochs = 4\n").unwrap();
        apply_override(&mut table, "pretrain.epochs=9").unwrap();
        apply_override(&mut table, "stack.hidden_dims=[5, 6]").unwrap();
        apply_override(&mut table, "stack.hidden_activation=tanh").unwrap();
        let cfg = RunConfig::from_table(table).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.pretrain.epochs, 9);
        assert_eq!(cfg.stack.hidden_dims, vec![5, 6]);
        assert_eq!(cfg.stack.hidden_activation, ActivationKind::Tanh);
    }

    #[test]
    fn digest_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: Some("elsewhere".into()),
            ..RunConfig::default()
        };
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
