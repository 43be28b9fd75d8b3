//! Experiment runner for the `holodyn` library: configuration files, a
//! content-addressed artifact cache, and report and manifest emission.

pub mod cache;
pub mod codec;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Kind};
pub use error::CliError;
pub use report::RunManifest;
pub use run::run;
