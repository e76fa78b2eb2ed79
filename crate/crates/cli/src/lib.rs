//! Experiment harness for `ucfalloc`: configuration, seeded runs, metrics
//! files, plots and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use cli::cli_dispatch;
