//! Config-driven pipelines behind the `bec-delay` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{Check, EstimateReport, Verdict};
pub use config::ExperimentConfig;
