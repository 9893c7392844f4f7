use std::path::{Path, PathBuf};

use panoiqa_core::features::FeatureMap;
use panoiqa_core::metrics::DEFAULT_TRAIN_RATIO;
use panoiqa_core::{FixedScorer, TrajectoryMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// A scorer selectable by name in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    /// Ridge regression on handcrafted features, mean-pooled.
    Linear,
    /// Ridge regression on the composite (log-compressed) features.
    Composite,
    /// Recurrent aggregation over viewports with a linear head.
    Integrated,
    Fixed(FixedScorer),
}

impl ScorerKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "linear" => Some(Self::Linear),
            "composite" => Some(Self::Composite),
            "integrated" => Some(Self::Integrated),
            other => FixedScorer::from_name(other).map(Self::Fixed),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Composite => "composite",
            Self::Integrated => "integrated",
            Self::Fixed(f) => f.name(),
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, Self::Fixed(_))
    }

    pub fn feature_map(self) -> Option<FeatureMap> {
        match self {
            Self::Linear | Self::Integrated => Some(FeatureMap::Handcrafted),
            Self::Composite => Some(FeatureMap::Composite),
            Self::Fixed(_) => None,
        }
    }

    pub fn all_names() -> Vec<&'static str> {
        let mut v = vec!["linear", "composite", "integrated"];
        v.extend(panoiqa_core::fixed_scorers().iter().map(|f| f.name()));
        v
    }
}

fn default_ratio() -> f64 {
    DEFAULT_TRAIN_RATIO
}

fn default_prefit() -> bool {
    true
}

fn default_trajectory() -> TrajectoryMode {
    TrajectoryMode::Image8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scorers: Vec<String>,
    #[serde(default = "default_trajectory")]
    pub trajectory: TrajectoryMode,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prefit")]
    pub prefit: bool,
    /// Keep every distortion of one reference image on the same side of the
    /// split.
    #[serde(default)]
    pub grouped_split: bool,
    /// Source database manifest.
    pub source: PathBuf,
    /// Target manifests for cross-database runs.
    #[serde(default)]
    pub targets: Vec<PathBuf>,
    /// Not part of the experiment identity.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(source: impl Into<PathBuf>, scorers: &[&str]) -> Self {
        Self {
            scorers: scorers.iter().map(|s| s.to_string()).collect(),
            trajectory: default_trajectory(),
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed: 0,
            prefit: true,
            grouped_split: false,
            source: source.into(),
            targets: Vec::new(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON: field order is fixed by the struct, the output
    /// directory is excluded.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Checks everything that can be checked before touching image data.
    pub fn validate(&self) -> Result<Vec<ScorerKind>> {
        let kinds = self.validate_scorers()?;
        for p in std::iter::once(&self.source).chain(&self.targets) {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "database manifest {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(kinds)
    }

    /// Scorer and split checks only, for in-memory datasets.
    pub fn validate_scorers(&self) -> Result<Vec<ScorerKind>> {
        if self.scorers.is_empty() {
            return Err(CliError::Config("no scorers configured".into()));
        }
        let kinds = self
            .scorers
            .iter()
            .map(|s| {
                ScorerKind::parse(s).ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown scorer `{s}` (known: {})",
                        ScorerKind::all_names().join(", ")
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(CliError::Config(format!("scorer `{}` listed twice", k.name())));
            }
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(CliError::Config(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        Ok(kinds)
    }
}
