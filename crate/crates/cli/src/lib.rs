//! Command-line front end for `sdanet`.
//!
//! Every command reads a [`config::RunConfig`], writes deterministic reports
//! into the output directory and keeps timing data in `run_meta.json`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use args::{Cli, Command, CommonArgs};
pub use commands::run;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
