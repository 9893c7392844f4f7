//! Operational layer of the toolkit: CSV manifests, experiment configs,
//! orchestration of training/evaluation runs, and report emission.

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod synth;

pub use config::{ExperimentConfig, ScorerKind};
pub use error::{CliError, Stage};
pub use experiment::{run_cross, run_experiment, CrossReport, Dataset, ExperimentReport};
pub use manifest::{load_manifest, DatasetManifest, ManifestError, ManifestRow};
