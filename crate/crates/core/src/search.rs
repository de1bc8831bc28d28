//! Exhaustive grid search over hidden activation × depth × width (and
//! corruption level/mode), one full pipeline per cell.
//!
//! Each cell derives all of its seeds from `(base seed, cell identifier)`, so
//! a cell's result depends only on the cell and the data. The ledger is sorted
//! into canonical cell order after the (possibly parallel) run.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::autoencoder::CorruptionSpec;
use crate::data::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::exec::with_workers;
use crate::linalg::derive_seed;
use crate::nn::{ActivationKind, SgdConfig};
use crate::sda::{run_pipeline, Budget, CorruptionMode, FinetuneConfig, PipelineConfig, StackSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub activations: Vec<ActivationKind>,
    pub layer_counts: Vec<usize>,
    pub neuron_counts: Vec<usize>,
    pub corruption_levels: Vec<f64>,
    pub corruption_modes: Vec<CorruptionMode>,
    pub seeds: Vec<u64>,
    pub pretrain: SgdConfig,
    pub finetune: FinetuneConfig,
    /// Per-cell wall-time limit in seconds.
    pub budget_s: Option<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("activations", self.activations.is_empty()),
            ("layer_counts", self.layer_counts.is_empty()),
            ("neuron_counts", self.neuron_counts.is_empty()),
            ("corruption_levels", self.corruption_levels.is_empty()),
            ("corruption_modes", self.corruption_modes.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::arg(format!("grid dimension '{name}' is empty")));
        }
        if self.activations.contains(&ActivationKind::Softmax) {
            return Err(Error::arg("softmax cannot be searched as a hidden activation"));
        }
        if self.layer_counts.contains(&0) || self.neuron_counts.contains(&0) {
            return Err(Error::arg("layer and neuron counts must be positive"));
        }
        for &level in &self.corruption_levels {
            CorruptionSpec::new(level, 0)?;
        }
        if let Some(b) = self.budget_s {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::arg("budget_s must be positive"));
            }
        }
        self.pretrain.validate()?;
        self.finetune.validate()
    }

    /// Every cell, in canonical order, without duplicates.
    pub fn cells(&self) -> Vec<CellId> {
        let mut cells = Vec::new();
        for &activation in &self.activations {
            for &n_layers in &self.layer_counts {
                for &n_neurons in &self.neuron_counts {
                    for &corruption_level in &self.corruption_levels {
                        for &corruption_mode in &self.corruption_modes {
                            for &seed in &self.seeds {
                                cells.push(CellId {
                                    activation,
                                    n_layers,
                                    n_neurons,
                                    corruption_level,
                                    corruption_mode,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells.sort_by(CellId::canonical_cmp);
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellId {
    pub activation: ActivationKind,
    pub n_layers: usize,
    pub n_neurons: usize,
    pub corruption_level: f64,
    pub corruption_mode: CorruptionMode,
    pub seed: u64,
}

impl CellId {
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.activation
            .cmp(&other.activation)
            .then(self.n_layers.cmp(&other.n_layers))
            .then(self.n_neurons.cmp(&other.n_neurons))
            .then(self.corruption_level.total_cmp(&other.corruption_level))
            .then(self.corruption_mode.cmp(&other.corruption_mode))
            .then(self.seed.cmp(&other.seed))
    }

    /// Seed-free identifier, e.g. `sigmoid/L4/N300/c0.3/every-layer`.
    pub fn key(&self) -> String {
        format!(
            "{}/L{}/N{}/c{}/{}",
            self.activation, self.n_layers, self.n_neurons, self.corruption_level, self.corruption_mode
        )
    }

    pub fn cell_seed(&self) -> u64 {
        derive_seed(self.seed, &self.key())
    }

    pub fn pipeline(&self, grid: &GridSpec, input_dim: usize, n_classes: usize) -> PipelineConfig {
        let s = self.cell_seed();
        PipelineConfig {
            stack: StackSpec {
                input_dim,
                hidden_dims: vec![self.n_neurons; self.n_layers],
                hidden_activation: self.activation,
                n_classes,
                corruption: CorruptionSpec {
                    level: self.corruption_level,
                    seed: derive_seed(s, "corruption"),
                },
                corruption_mode: self.corruption_mode,
            },
            pretrain: SgdConfig {
                seed: derive_seed(s, "pretrain"),
                ..grid.pretrain.clone()
            },
            finetune: FinetuneConfig {
                sgd: SgdConfig {
                    seed: derive_seed(s, "finetune"),
                    ..grid.finetune.sgd.clone()
                },
                ..grid.finetune.clone()
            },
            pretrain_enabled: true,
            init_seed: derive_seed(s, "init"),
        }
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/s{}", self.key(), self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Ok,
    Failed,
    BudgetExceeded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub cell: CellId,
    pub status: TrialStatus,
    /// Failure diagnostic; empty on success.
    pub message: String,
    pub validation_error_pct: Option<f64>,
    pub test_error_pct: Option<f64>,
    pub epochs_ran: usize,
    /// Excluded from equality and from the persisted ledger.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl PartialEq for TrialResult {
    fn eq(&self, other: &Self) -> bool {
        self.cell == other.cell
            && self.status == other.status
            && self.message == other.message
            && self.validation_error_pct.map(f64::to_bits) == other.validation_error_pct.map(f64::to_bits)
            && self.test_error_pct.map(f64::to_bits) == other.test_error_pct.map(f64::to_bits)
            && self.epochs_ran == other.epochs_ran
    }
}

/// Runs one cell's full pipeline. Failures are captured in the result.
pub fn run_cell(grid: &GridSpec, cell: &CellId, data: &Dataset) -> TrialResult {
    let started = Instant::now();
    let budget = Budget::new(grid.budget_s.map(Duration::from_secs_f64));
    let cfg = cell.pipeline(grid, data.dim(), data.n_classes());
    let outcome = run_pipeline(&cfg, data, &budget);
    let wall_time_s = started.elapsed().as_secs_f64();
    match outcome {
        Ok(out) => TrialResult {
            cell: *cell,
            status: TrialStatus::Ok,
            message: String::new(),
            validation_error_pct: Some(out.valid.error_pct()),
            test_error_pct: out.test.as_ref().map(|t| t.error_pct()),
            epochs_ran: out.finetune.epochs_ran(),
            wall_time_s,
        },
        Err(err) => TrialResult {
            cell: *cell,
            status: match err {
                Error::BudgetExceeded { .. } => TrialStatus::BudgetExceeded,
                _ => TrialStatus::Failed,
            },
            // Elapsed times vary run to run; keep the ledger deterministic.
            message: match err {
                Error::BudgetExceeded { budget_s, .. } => format!("exceeded {budget_s}s budget"),
                other => other.to_string(),
            },
            validation_error_pct: None,
            test_error_pct: None,
            epochs_ran: 0,
            wall_time_s,
        },
    }
}

/// One pipeline per cell on `workers` threads; ledger in canonical order.
pub fn run_grid(spec: &GridSpec, data: &Dataset, workers: usize) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    for tag in SplitTag::ALL {
        if data.count(tag) == 0 {
            return Err(Error::arg(format!("grid search needs a nonempty {} split", tag.name())));
        }
    }
    let cells = spec.cells();
    let mut ledger = with_workers(workers, |exec| exec.map(&cells, |cell| run_cell(spec, cell, data)));
    ledger.sort_by(|a, b| a.cell.canonical_cmp(&b.cell));
    Ok(ledger)
}

/// Lowest validation error; ties prefer fewer layers, then fewer neurons,
/// then the lower seed (remaining fields settle any further tie).
pub fn select_best(ledger: &[TrialResult]) -> Result<&TrialResult> {
    ledger
        .iter()
        .filter_map(|t| t.validation_error_pct.map(|e| (e, t)))
        .min_by(|(ea, a), (eb, b)| {
            ea.total_cmp(eb)
                .then(a.cell.n_layers.cmp(&b.cell.n_layers))
                .then(a.cell.n_neurons.cmp(&b.cell.n_neurons))
                .then(a.cell.seed.cmp(&b.cell.seed))
                .then(a.cell.canonical_cmp(&b.cell))
        })
        .map(|(_, t)| t)
        .ok_or_else(|| Error::arg("no successful cell in the ledger"))
}

/// Validation error by hidden activation (rows) and depth (columns) at one
/// width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Table {
    pub n_neurons: usize,
    pub activations: Vec<ActivationKind>,
    pub layer_counts: Vec<usize>,
    pub errors: Vec<Vec<Option<f64>>>,
    /// `activation/L{depth}` labels of cells with no successful result.
    pub missing: Vec<String>,
}

impl Fig3Table {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn require_complete(self) -> Result<Self> {
        if self.is_complete() {
            Ok(self)
        } else {
            Err(Error::IncompleteGrid(self.missing))
        }
    }
}

/// Projects the ledger onto activation × depth at width `n_neurons`. When
/// several cells share a position (other seeds or corruption settings) the
/// lowest error is shown.
pub fn emit_fig3_table(ledger: &[TrialResult], n_neurons: usize) -> Fig3Table {
    let at_width: Vec<&TrialResult> = ledger.iter().filter(|t| t.cell.n_neurons == n_neurons).collect();
    let mut activations: Vec<ActivationKind> = at_width.iter().map(|t| t.cell.activation).collect();
    activations.sort();
    activations.dedup();
    let mut layer_counts: Vec<usize> = at_width.iter().map(|t| t.cell.n_layers).collect();
    layer_counts.sort_unstable();
    layer_counts.dedup();

    let mut errors = vec![vec![None; layer_counts.len()]; activations.len()];
    let mut missing = Vec::new();
    for (r, &act) in activations.iter().enumerate() {
        for (c, &depth) in layer_counts.iter().enumerate() {
            let best = at_width
                .iter()
                .filter(|t| t.cell.activation == act && t.cell.n_layers == depth)
                .filter_map(|t| t.validation_error_pct)
                .min_by(f64::total_cmp);
            errors[r][c] = best;
            if best.is_none() {
                missing.push(format!("{act}/L{depth}"));
            }
        }
    }
    Fig3Table {
        n_neurons,
        activations,
        layer_counts,
        errors,
        missing,
    }
}
