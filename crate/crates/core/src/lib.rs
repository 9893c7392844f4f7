//! Blind panoramic image quality assessment toolkit.
//!
//! Equirectangular panoramas are sampled into rectilinear viewports along a
//! trajectory, each viewport is reduced to a small handcrafted feature
//! vector, and per-viewport evidence is pooled or aggregated into an image
//! score. Around that pipeline sit the evaluation criteria (PLCC with
//! logistic prefitting, SRCC), the benchmark analysis (gap/gain, saturation,
//! database ranking) and a seeded distortion generator for synthetic
//! databases.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the precision.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod distortion;
pub mod features;
pub mod fixtures;
pub mod geometry;
mod linalg;
pub mod metrics;
pub mod raster;
pub mod recurrent;
pub mod reference;
pub mod scalar;
pub mod scorer;
pub mod synth;
pub mod viewport;

pub use analysis::{
    aggregate_ranks, classify_saturation, gain, gap, mean_gap, rank_from_metric, AnalysisError, CrossMatrix, GapRecord,
    Metric, Perspective, RankDirection, RankTable, Saturation,
};
pub use distortion::{apply_distortion, DistortionError, DistortionKind, DistortionSpec, DistortionType, Scope};
pub use features::{extract_features, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use fixtures::{benchmark_fixtures, BenchmarkFixtures};
pub use geometry::{erp_to_sphere, sphere_to_erp, viewport_ray, GeometryError, SphericalPoint};
pub use metrics::{
    evaluate, fit_logistic, merge_dual_mos, plcc, split_dataset, srcc, EvalReport, LogisticFit, MetricError,
    QualityRecord, Split,
};
pub use raster::{sample_bilinear, ErpImage, RasterError, Viewport};
pub use recurrent::{aggregate_recurrent, score_integrated, IntegratedScorer, RecurrentAggregator};
pub use reference::{fixed_scorers, ws_psnr, FixedScorer};
pub use scalar::Scalar;
pub use scorer::{pool_scores, score_viewport, train_linear_scorer, LinearScorer, ScoringError, TrainingSample};
pub use synth::{build_database, procedural_panorama, DatabasePlan, ScopeKind, SyntheticDatabase};
pub use viewport::{extract_viewport, extract_viewports, make_trajectory, Trajectory, TrajectoryMode};

pub type SphericalPoint64 = SphericalPoint<f64>;
pub type SphericalPoint32 = SphericalPoint<f32>;
pub type Viewport64 = Viewport<f64>;
pub type Viewport32 = Viewport<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type FeatureVector64 = FeatureVector<f64>;
pub type FeatureVector32 = FeatureVector<f32>;
pub type LinearScorer64 = LinearScorer<f64>;
pub type LinearScorer32 = LinearScorer<f32>;
pub type IntegratedScorer64 = IntegratedScorer<f64>;
pub type IntegratedScorer32 = IntegratedScorer<f32>;
pub type RecurrentAggregator64 = RecurrentAggregator<f64>;
pub type RecurrentAggregator32 = RecurrentAggregator<f32>;
pub type EvalReport64 = EvalReport<f64>;
pub type EvalReport32 = EvalReport<f32>;
pub type QualityRecord64 = QualityRecord<f64>;
pub type QualityRecord32 = QualityRecord<f32>;
