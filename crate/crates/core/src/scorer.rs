//! Partial mapping: a linear score per viewport followed by average pooling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMap, FeatureVector, FEATURE_DIM};
use crate::linalg::ridge_with_intercept;
use crate::raster::Viewport;
use crate::scalar::Scalar;

pub const DEFAULT_RIDGE: f64 = 1e-3;
pub const SCORER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("feature dimension {actual} does not match scorer dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot pool an empty score list")]
    EmptyPool,
    #[error("no viewport features supplied")]
    NoViewports,
    #[error("training needs at least {needed} images, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite MOS at training sample {0}")]
    NonFiniteMos(usize),
    #[error("least-squares system is singular")]
    Singular,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} requires a reference image")]
    MissingReference(&'static str),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}

/// Per-dimension z-score normalization. Dimensions without variance in the
/// training data keep `std = 1` and receive weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer<T> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Scalar> FeatureNormalizer<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            means: vec![T::zero(); dim],
            stds: vec![T::one(); dim],
        }
    }

    /// Fits means and population standard deviations. The returned mask marks
    /// dimensions with nonzero variance.
    pub fn fit(rows: &[Vec<T>]) -> (Self, Vec<bool>) {
        let d = rows.first().map_or(0, Vec::len);
        let n = T::from_usize_lossy(rows.len().max(1));
        let mut means = vec![T::zero(); d];
        for row in rows {
            for (m, &x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![T::zero(); d];
        for row in rows {
            for k in 0..d {
                let dx = row[k] - means[k];
                stds[k] += dx * dx;
            }
        }
        let mut active = vec![false; d];
        for k in 0..d {
            let s = (stds[k] / n).sqrt();
            // relative threshold: a column that is constant up to rounding is dropped
            let floor = T::lit(1e-12) * (T::one() + means[k].abs());
            if s > floor {
                stds[k] = s;
                active[k] = true;
            } else {
                stds[k] = T::one();
            }
        }
        (Self { means, stds }, active)
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, values: &[T]) -> Vec<T> {
        values
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }
}

/// `s = P · normalize(f) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer<T> {
    pub projection: Vec<T>,
    pub bias: T,
    pub normalizer: FeatureNormalizer<T>,
    #[serde(default)]
    pub feature_map: FeatureMap,
}

impl<T: Scalar> LinearScorer<T> {
    pub fn new(projection: Vec<T>, bias: T, normalizer: FeatureNormalizer<T>) -> Result<Self, ScoringError> {
        if projection.len() != normalizer.dim() || normalizer.stds.len() != normalizer.dim() {
            return Err(ScoringError::DimensionMismatch {
                expected: normalizer.dim(),
                actual: projection.len(),
            });
        }
        Ok(Self {
            projection,
            bias,
            normalizer,
            feature_map: FeatureMap::Handcrafted,
        })
    }

    pub fn with_feature_map(mut self, feature_map: FeatureMap) -> Self {
        self.feature_map = feature_map;
        self
    }

    /// Features of one viewport under this scorer's feature map.
    pub fn features(&self, vp: &Viewport<T>) -> FeatureVector<T> {
        self.feature_map.extract(vp)
    }

    pub fn dim(&self) -> usize {
        self.projection.len()
    }

    /// Mean-pooled score over an image's viewports.
    pub fn score_image(&self, viewports: &[FeatureVector<T>]) -> Result<T, ScoringError> {
        let scores = viewports
            .iter()
            .map(|f| score_viewport(self, f))
            .collect::<Result<Vec<_>, _>>()?;
        pool_scores(&scores)
    }

    pub fn to_json(&self) -> String {
        let doc = ScorerDocument {
            version: SCORER_FORMAT_VERSION,
            feature_names: if self.dim() == FEATURE_DIM {
                self.feature_map.names().iter().map(|s| s.to_string()).collect()
            } else {
                (0..self.dim()).map(|k| format!("f{k}")).collect()
            },
            normalizer: NormalizerDocument {
                means: self.normalizer.means.iter().map(|x| x.to_f64_lossy()).collect(),
                stds: self.normalizer.stds.iter().map(|x| x.to_f64_lossy()).collect(),
            },
            weights: self.projection.iter().map(|x| x.to_f64_lossy()).collect(),
            bias: self.bias.to_f64_lossy(),
        };
        serde_json::to_string_pretty(&doc).expect("plain numeric document")
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerFormatError> {
        let doc: ScorerDocument = serde_json::from_str(text)?;
        if doc.version != SCORER_FORMAT_VERSION {
            return Err(ScorerFormatError::Version(doc.version));
        }
        let d = doc.weights.len();
        if doc.normalizer.means.len() != d || doc.normalizer.stds.len() != d || doc.feature_names.len() != d {
            return Err(ScorerFormatError::Inconsistent("vector lengths differ".into()));
        }
        if doc.normalizer.stds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(ScorerFormatError::Inconsistent(
                "normalizer stds must be positive".into(),
            ));
        }
        let feature_map = FeatureMap::from_names(&doc.feature_names)
            .ok_or_else(|| ScorerFormatError::Inconsistent(format!("unknown feature set {:?}", doc.feature_names)))?;
        let conv = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        Ok(Self {
            projection: conv(&doc.weights),
            bias: T::lit(doc.bias),
            normalizer: FeatureNormalizer {
                means: conv(&doc.normalizer.means),
                stds: conv(&doc.normalizer.stds),
            },
            feature_map,
        })
    }
}

#[derive(Debug, Error)]
pub enum ScorerFormatError {
    #[error("unsupported scorer format version {0}")]
    Version(u32),
    #[error("malformed scorer document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent scorer document: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct NormalizerDocument {
    means: Vec<f64>,
    stds: Vec<f64>,
}

/// On-disk layout of a trained scorer.
#[derive(Debug, Serialize, Deserialize)]
struct ScorerDocument {
    version: u32,
    feature_names: Vec<String>,
    normalizer: NormalizerDocument,
    weights: Vec<f64>,
    bias: f64,
}

pub fn score_viewport<T: Scalar>(scorer: &LinearScorer<T>, f: &FeatureVector<T>) -> Result<T, ScoringError> {
    if f.dim() != scorer.dim() {
        return Err(ScoringError::DimensionMismatch {
            expected: scorer.dim(),
            actual: f.dim(),
        });
    }
    let z = scorer.normalizer.apply(f.values());
    Ok(z.iter()
        .zip(&scorer.projection)
        .fold(scorer.bias, |acc, (&zi, &p)| acc + p * zi))
}

/// Average pooling `(1/M) Σ s_m`.
pub fn pool_scores<T: Scalar>(scores: &[T]) -> Result<T, ScoringError> {
    crate::scalar::mean(scores).ok_or(ScoringError::EmptyPool)
}

/// One training image: its per-viewport features and its MOS.
#[derive(Debug, Clone)]
pub struct TrainingSample<T> {
    pub viewports: Vec<FeatureVector<T>>,
    pub mos: T,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions<T> {
    pub ridge: T,
    /// Recorded on the trained scorer; samples must already use it.
    pub feature_map: FeatureMap,
}

impl<T: Scalar> Default for TrainOptions<T> {
    fn default() -> Self {
        Self {
            ridge: T::lit(DEFAULT_RIDGE),
            feature_map: FeatureMap::Handcrafted,
        }
    }
}

/// Ridge regression (λ = 1e-3) from the viewport-mean feature vector to MOS.
pub fn train_linear_scorer<T: Scalar>(samples: &[TrainingSample<T>]) -> Result<LinearScorer<T>, ScoringError> {
    train_linear_scorer_with(samples, TrainOptions::default())
}

pub fn train_linear_scorer_with<T: Scalar>(
    samples: &[TrainingSample<T>],
    options: TrainOptions<T>,
) -> Result<LinearScorer<T>, ScoringError> {
    let rows = mean_feature_rows(samples)?;
    let d = rows[0].len();
    if samples.len() < d + 1 {
        return Err(ScoringError::TooFewSamples {
            needed: d + 1,
            got: samples.len(),
        });
    }
    let y: Vec<T> = samples.iter().map(|s| s.mos).collect();
    if let Some(i) = y.iter().position(|m| !m.is_finite()) {
        return Err(ScoringError::NonFiniteMos(i));
    }

    let (normalizer, active) = FeatureNormalizer::fit(&rows);
    let active_idx: Vec<usize> = (0..d).filter(|&k| active[k]).collect();
    let z_rows: Vec<Vec<T>> = rows
        .iter()
        .map(|r| {
            let z = normalizer.apply(r);
            active_idx.iter().map(|&k| z[k]).collect()
        })
        .collect();
    let (w_active, bias) = ridge_with_intercept(&z_rows, &y, options.ridge).ok_or(ScoringError::Singular)?;
    let mut projection = vec![T::zero(); d];
    for (&k, &w) in active_idx.iter().zip(&w_active) {
        projection[k] = w;
    }
    Ok(LinearScorer::new(projection, bias, normalizer)?.with_feature_map(options.feature_map))
}

/// Viewport-mean feature row per sample, with shape checks.
pub(crate) fn mean_feature_rows<T: Scalar>(samples: &[TrainingSample<T>]) -> Result<Vec<Vec<T>>, ScoringError> {
    if samples.is_empty() {
        return Err(ScoringError::TooFewSamples { needed: 1, got: 0 });
    }
    let d = samples[0]
        .viewports
        .first()
        .map(FeatureVector::dim)
        .ok_or(ScoringError::NoViewports)?;
    samples
        .iter()
        .map(|s| {
            if let Some(bad) = s.viewports.iter().find(|f| f.dim() != d) {
                return Err(ScoringError::DimensionMismatch {
                    expected: d,
                    actual: bad.dim(),
                });
            }
            FeatureVector::mean_of(&s.viewports)
                .map(|f| f.values().to_vec())
                .ok_or(ScoringError::NoViewports)
        })
        .collect()
}
