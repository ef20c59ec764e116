//! Backtesting harness around `bci-core`: config parsing, CSV ingestion,
//! the task transforms, and the CLI subcommand implementations.

pub mod commands;
pub mod config;
pub mod data;

pub use commands::{execute, CliError, CommandKind, Invocation};
pub use config::ExperimentConfig;
