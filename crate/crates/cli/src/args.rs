use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "sdanet",
    version,
    about = "Stacked denoising autoencoder pre-training for digit classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override any config key, e.g. `--set pretrain.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// IDX images for a single pair divided by `data.split`.
    #[arg(long, value_name = "PATH")]
    pub images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub valid_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub valid_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Greedy layer-wise DA pre-training; writes the stack and loss traces.
    Pretrain(CommonArgs),
    /// Supervised fine-tuning of a pre-trained stack or a random network.
    Finetune {
        #[command(flatten)]
        common: CommonArgs,
        /// Stack file from `pretrain`, or `none` for random initialization.
        #[arg(long, default_value = "none")]
        pretrained: String,
    },
    /// Runs the configured grid and writes the trial ledger.
    Gridsearch {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Error rate and confusion matrix of a saved classifier on one split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// train, valid or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fits and scores the comparison models.
    Baselines(CommonArgs),
    /// Writes a synthetic one-hot bars dataset as an IDX pair.
    MakeBars {
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for `bars-images-idx3-ubyte` and `bars-labels-idx1-ubyte`.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}
