//! Experiment orchestration: load → merge dual MOS → split → viewports →
//! features → train → score → evaluate, plus the cross-database variant.
//!
//! Per-image work runs on the rayon pool; every reduction happens after an
//! order-preserving collect, so results do not depend on the thread count.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use panoiqa_core::analysis::{classify_report, fmt_corr, CrossMatrix, MeanGain};
use panoiqa_core::features::FeatureMap;
use panoiqa_core::metrics::{split_labels, split_labels_grouped};
use panoiqa_core::recurrent::train_integrated_scorer;
use panoiqa_core::scorer::{train_linear_scorer_with, TrainOptions};
use panoiqa_core::synth::SyntheticDatabase;
use panoiqa_core::{
    evaluate, extract_viewports, make_trajectory, merge_dual_mos, ErpImage, EvalReport, FeatureVector,
    IntegratedScorer, LinearScorer, MetricError, QualityRecord, RecurrentAggregator, Saturation, ScoringError, Split,
    TrainingSample, Trajectory, TrajectoryMode,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ScorerKind};
use crate::error::{CliError, Result, Stage};
use crate::manifest::{load_manifest, DatasetManifest};

pub const TOOL: &str = "panoiqa";

#[derive(Debug, Clone)]
pub struct Item {
    pub id: String,
    pub image: Arc<ErpImage>,
    pub reference: Option<Arc<ErpImage>>,
    pub mos: f64,
    pub distortion: Option<String>,
    pub split: Option<Split>,
    /// Content group for grouped splitting: the reference path, or the
    /// image's own path for pristine rows.
    pub group: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// SHA-256 of the manifest text, or of the synthetic record list.
    pub fingerprint: String,
    pub items: Vec<Item>,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Dataset {
    /// Decodes every image of a validated manifest and merges dual ratings.
    pub fn from_manifest(m: &DatasetManifest, fingerprint: String) -> Result<Self> {
        let open = |rel: &Path| -> Result<Arc<ErpImage>> {
            let img = ErpImage::open(m.root.join(rel), false).map_err(|e| CliError::data(Stage::Load, e))?;
            Ok(Arc::new(img))
        };
        let mut ref_paths: Vec<&PathBuf> = m.rows.iter().filter_map(|r| r.reference_path.as_ref()).collect();
        ref_paths.sort();
        ref_paths.dedup();
        let refs: HashMap<&PathBuf, Arc<ErpImage>> = ref_paths
            .par_iter()
            .map(|p| open(p).map(|img| (*p, img)))
            .collect::<Result<_>>()?;

        let items = m
            .rows
            .par_iter()
            .map(|row| -> Result<Item> {
                let image = match refs.get(&row.path) {
                    Some(img) => img.clone(),
                    None => open(&row.path)?,
                };
                let mut record = QualityRecord {
                    image_id: row.id.clone(),
                    predicted: 0.0,
                    mos: row.mos,
                    mos2: row.mos2,
                    split: Split::Test,
                    database: m.name.clone(),
                    distortion_tag: row.distortion.clone(),
                    notes: Vec::new(),
                };
                if row.is_dual_mos() {
                    record = merge_dual_mos(record).map_err(|e| CliError::data(Stage::Load, e))?;
                }
                Ok(Item {
                    id: row.id.clone(),
                    image,
                    reference: row.reference_path.as_ref().map(|p| refs[p].clone()),
                    mos: record.mos,
                    distortion: row.distortion.clone(),
                    split: row.split,
                    group: row.reference_path.as_ref().unwrap_or(&row.path).display().to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: m.name.clone(),
            fingerprint,
            items,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", path.display())))?;
        let manifest = load_manifest(path)?;
        Self::from_manifest(&manifest, sha_hex(&text))
    }

    /// In-memory view of a generated database; pristine originals are the
    /// references.
    pub fn from_synthetic(db: &SyntheticDatabase) -> Self {
        let pristine: HashMap<&Path, Arc<ErpImage>> = db
            .pristine()
            .map(|r| (r.path.as_path(), Arc::new(r.image.clone())))
            .collect();
        let mut listing = String::new();
        let items = db
            .records
            .iter()
            .map(|r| {
                let _ = writeln!(listing, "{},{},{}", r.id, r.mos, r.distortion_tag().unwrap_or_default());
                let image = pristine
                    .get(r.path.as_path())
                    .cloned()
                    .unwrap_or_else(|| Arc::new(r.image.clone()));
                Item {
                    id: r.id.clone(),
                    image,
                    reference: r.reference_path.as_ref().map(|p| pristine[p.as_path()].clone()),
                    mos: r.mos,
                    distortion: r.distortion_tag(),
                    split: None,
                    group: r.source_id.clone(),
                }
            })
            .collect();
        let _ = write!(listing, "seed={}", db.seed);
        Self {
            name: db.name.clone(),
            fingerprint: sha_hex(listing.as_bytes()),
            items,
        }
    }

    pub fn mos(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.mos).collect()
    }
}

/// Manifest splits when every row has one, otherwise a seeded partition.
pub fn assign_splits(ds: &Dataset, ratio: f64, seed: u64, grouped: bool) -> Result<Vec<Split>> {
    let given: Vec<Option<Split>> = ds.items.iter().map(|i| i.split).collect();
    if given.iter().all(Option::is_some) {
        return Ok(given.into_iter().flatten().collect());
    }
    if given.iter().any(Option::is_some) {
        return Err(CliError::data(
            Stage::Split,
            "manifest assigns splits to some rows but not all",
        ));
    }
    let labels = if grouped {
        let groups: Vec<&str> = ds.items.iter().map(|i| i.group.as_str()).collect();
        split_labels_grouped(&groups, ratio, seed)
    } else {
        split_labels(ds.items.len(), ratio, seed)
    };
    let labels = labels.map_err(|e| CliError::data(Stage::Split, e))?;
    for s in [Split::Train, Split::Test] {
        if !labels.contains(&s) {
            return Err(CliError::data(Stage::Split, format!("{} split is empty", s)));
        }
    }
    Ok(labels)
}

/// Per-image viewport features for each requested feature map.
pub struct FeatureTable {
    pub maps: BTreeMap<&'static str, Vec<Vec<FeatureVector<f64>>>>,
}

fn map_key(m: FeatureMap) -> &'static str {
    match m {
        FeatureMap::Handcrafted => "handcrafted",
        FeatureMap::Composite => "composite",
    }
}

impl FeatureTable {
    pub fn compute(ds: &Dataset, traj: &Trajectory<f64>, maps: &[FeatureMap]) -> Result<Self> {
        let mut maps = maps.to_vec();
        maps.sort_by_key(|m| map_key(*m));
        maps.dedup();
        let per_item = ds
            .items
            .par_iter()
            .map(|it| -> Result<Vec<Vec<FeatureVector<f64>>>> {
                let vps = extract_viewports::<f64>(&it.image, traj)
                    .map_err(|e| CliError::data(Stage::Features, format!("{}: {e}", it.id)))?;
                Ok(maps
                    .iter()
                    .map(|m| vps.iter().map(|v| m.extract(v)).collect())
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = BTreeMap::new();
        for (k, m) in maps.iter().enumerate() {
            out.insert(map_key(*m), per_item.iter().map(|f| f[k].clone()).collect());
        }
        Ok(Self { maps: out })
    }

    fn get(&self, m: FeatureMap) -> &[Vec<FeatureVector<f64>>] {
        &self.maps[map_key(m)]
    }
}

/// Parameters of a trained scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelParams {
    Linear(LinearScorer<f64>),
    Integrated(IntegratedScorer<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub tool: String,
    pub scorer: String,
    pub trajectory: TrajectoryMode,
    pub database: String,
    pub seed: u64,
    pub n_train: usize,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn kind(&self) -> Result<ScorerKind> {
        ScorerKind::parse(&self.scorer)
            .filter(|k| k.is_trainable())
            .ok_or_else(|| CliError::Config(format!("model file names unknown scorer `{}`", self.scorer)))
    }
}

fn scoring_error(stage: Stage, e: ScoringError) -> CliError {
    match e {
        ScoringError::Singular => CliError::numerical(stage, e),
        other => CliError::data(stage, other),
    }
}

pub fn train_model(kind: ScorerKind, features: &[Vec<FeatureVector<f64>>], mos: &[f64]) -> Result<ModelParams> {
    let samples: Vec<TrainingSample<f64>> = features
        .iter()
        .zip(mos)
        .map(|(f, &m)| TrainingSample {
            viewports: f.clone(),
            mos: m,
        })
        .collect();
    let map = kind
        .feature_map()
        .ok_or_else(|| CliError::Config(format!("`{}` is not trainable", kind.name())))?;
    let options = TrainOptions {
        feature_map: map,
        ..TrainOptions::default()
    };
    let params = match kind {
        ScorerKind::Integrated => ModelParams::Integrated(
            train_integrated_scorer(&samples, RecurrentAggregator::default(), options)
                .map_err(|e| scoring_error(Stage::Train, e))?,
        ),
        _ => ModelParams::Linear(
            train_linear_scorer_with(&samples, options).map_err(|e| scoring_error(Stage::Train, e))?,
        ),
    };
    Ok(params)
}

fn predict_one(params: &ModelParams, f: &[FeatureVector<f64>]) -> Result<f64> {
    let s = match params {
        ModelParams::Linear(m) => m.score_image(f),
        ModelParams::Integrated(m) => m.score_image(f),
    };
    s.map_err(|e| scoring_error(Stage::Score, e))
}

/// A scorer ready to predict: trained parameters or a fixed measure.
pub enum Predictor {
    Trained { kind: ScorerKind, params: ModelParams },
    Fixed(panoiqa_core::FixedScorer),
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Trained { kind, .. } => kind.name(),
            Predictor::Fixed(f) => f.name(),
        }
    }

    /// Scores the selected items of `ds`, in order.
    pub fn predict(
        &self,
        ds: &Dataset,
        features: &FeatureTable,
        traj: &Trajectory<f64>,
        idx: &[usize],
    ) -> Result<Vec<f64>> {
        let preds = match self {
            Predictor::Trained { kind, params } => {
                let f = features.get(kind.feature_map().expect("trainable"));
                idx.iter()
                    .map(|&i| predict_one(params, &f[i]))
                    .collect::<Result<Vec<_>>>()?
            }
            Predictor::Fixed(fs) => idx
                .par_iter()
                .map(|&i| {
                    let it = &ds.items[i];
                    let reference = match (&it.reference, fs.requires_reference(), &it.distortion) {
                        (Some(r), _, _) => Some(r.as_ref()),
                        // a pristine row is its own reference
                        (None, true, None) => Some(it.image.as_ref()),
                        (None, true, Some(_)) => {
                            return Err(CliError::data(
                                Stage::Score,
                                format!("{}: {} needs a reference image", it.id, fs.name()),
                            ))
                        }
                        (None, false, _) => None,
                    };
                    fs.score(&it.image, reference, traj)
                        .map_err(|e| scoring_error(Stage::Score, e))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if let Some(k) = preds.iter().position(|p| !p.is_finite()) {
            return Err(CliError::numerical(
                Stage::Score,
                format!(
                    "{} produced a non-finite score for `{}`",
                    self.name(),
                    ds.items[idx[k]].id
                ),
            ));
        }
        Ok(preds)
    }
}

fn metric_error(e: MetricError) -> CliError {
    match e {
        MetricError::NonFinite(_) => CliError::numerical(Stage::Evaluate, e),
        other => CliError::data(Stage::Evaluate, other),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerResult {
    pub scorer: String,
    pub report: EvalReport<f64>,
    /// Absent when a correlation is undefined.
    pub saturation: Option<Saturation>,
}

impl ScorerResult {
    fn new(scorer: &str, report: EvalReport<f64>) -> Self {
        Self {
            scorer: scorer.to_string(),
            saturation: classify_report(&report).ok(),
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub scorer: String,
    pub id: String,
    pub split: Split,
    pub mos: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub database: String,
    pub database_sha256: String,
    pub n_train: usize,
    pub n_test: usize,
    pub results: Vec<ScorerResult>,
    pub predictions: Vec<PredictionRow>,
}

/// Everything produced by training on one split of one database.
pub struct SourceRun {
    pub splits: Vec<Split>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub features: FeatureTable,
    pub predictors: Vec<Predictor>,
    pub traj: Trajectory<f64>,
}

pub fn feature_maps(kinds: &[ScorerKind]) -> Vec<FeatureMap> {
    kinds.iter().filter_map(|k| k.feature_map()).collect()
}

/// Splits `ds` and trains every trainable scorer on the train part.
pub fn train_on(config: &ExperimentConfig, kinds: &[ScorerKind], ds: &Dataset) -> Result<SourceRun> {
    let splits = assign_splits(ds, config.train_ratio, config.seed, config.grouped_split)?;
    let train_idx: Vec<usize> = (0..splits.len()).filter(|&i| splits[i] == Split::Train).collect();
    let test_idx: Vec<usize> = (0..splits.len()).filter(|&i| splits[i] == Split::Test).collect();
    let traj = make_trajectory::<f64>(config.trajectory);
    let features = FeatureTable::compute(ds, &traj, &feature_maps(kinds))?;
    let mos = ds.mos();
    let predictors = kinds
        .iter()
        .map(|&kind| match kind {
            ScorerKind::Fixed(f) => Ok(Predictor::Fixed(f)),
            _ => {
                let f = features.get(kind.feature_map().expect("trainable"));
                let x: Vec<Vec<FeatureVector<f64>>> = train_idx.iter().map(|&i| f[i].clone()).collect();
                let y: Vec<f64> = train_idx.iter().map(|&i| mos[i]).collect();
                Ok(Predictor::Trained {
                    kind,
                    params: train_model(kind, &x, &y)?,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceRun {
        splits,
        train_idx,
        test_idx,
        features,
        predictors,
        traj,
    })
}

fn evaluate_on(
    pred: &Predictor,
    run_traj: &Trajectory<f64>,
    ds: &Dataset,
    features: &FeatureTable,
    idx: &[usize],
    prefit: bool,
) -> Result<(Vec<f64>, EvalReport<f64>)> {
    let p = pred.predict(ds, features, run_traj, idx)?;
    let m: Vec<f64> = idx.iter().map(|&i| ds.items[i].mos).collect();
    let report = evaluate(&p, &m, prefit).map_err(metric_error)?;
    Ok((p, report))
}

/// Runs the single-database protocol on an already loaded dataset.
pub fn run_on_dataset(config: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentReport> {
    let kinds = config.validate_scorers()?;
    let run = train_on(config, &kinds, ds)?;
    let mut results = Vec::new();
    let mut predictions = Vec::new();
    for pred in &run.predictors {
        let (p, report) = evaluate_on(pred, &run.traj, ds, &run.features, &run.test_idx, config.prefit)?;
        for (&i, &v) in run.test_idx.iter().zip(&p) {
            predictions.push(PredictionRow {
                scorer: pred.name().to_string(),
                id: ds.items[i].id.clone(),
                split: run.splits[i],
                mos: ds.items[i].mos,
                predicted: v,
            });
        }
        results.push(ScorerResult::new(pred.name(), report));
    }
    Ok(ExperimentReport {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        seed: config.seed,
        config: config.clone(),
        database: ds.name.clone(),
        database_sha256: ds.fingerprint.clone(),
        n_train: run.train_idx.len(),
        n_test: run.test_idx.len(),
        results,
        predictions,
    })
}

/// Full single-database run from a config: validates, loads the source
/// manifest, evaluates, and writes the report bundle when `out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let ds = Dataset::load(&config.source)?;
    let report = run_on_dataset(config, &ds)?;
    if let Some(out) = &config.out {
        write_bundle(out, &experiment_files(&report))?;
    }
    Ok(report)
}

fn stamp(hash: &str, seed: u64) -> String {
    format!("config_hash={hash} seed={seed}")
}

pub fn experiment_markdown(r: &ExperimentReport) -> String {
    let mut s = format!(
        "# {} on {}\n\n{}\n\ntrain {} / test {} images, trajectory {:?}, prefit {}\n\n| Scorer | PLCC | SRCC | n | Status |\n|---|---|---|---|---|\n",
        TOOL,
        r.database,
        stamp(&r.config_hash, r.seed),
        r.n_train,
        r.n_test,
        r.config.trajectory,
        r.config.prefit
    );
    for res in &r.results {
        let status = res.saturation.map_or("undefined".to_string(), |x| format!("{x:?}"));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            res.scorer,
            fmt_corr(Some(res.report.plcc)),
            fmt_corr(Some(res.report.srcc)),
            res.report.n,
            status
        );
    }
    for res in &r.results {
        for d in &res.report.diagnostics {
            let _ = writeln!(s, "\n- {}: {d}", res.scorer);
        }
    }
    s
}

fn predictions_csv(r: &ExperimentReport) -> String {
    let mut s = format!("# {}\nscorer,id,split,mos,predicted\n", stamp(&r.config_hash, r.seed));
    for p in &r.predictions {
        let _ = writeln!(s, "{},{},{},{},{}", p.scorer, p.id, p.split, p.mos, p.predicted);
    }
    s
}

pub fn experiment_files(r: &ExperimentReport) -> Vec<(String, String)> {
    vec![
        (
            "report.json".into(),
            serde_json::to_string_pretty(r).expect("report serializes") + "\n",
        ),
        ("report.md".into(), experiment_markdown(r)),
        ("predictions.csv".into(), predictions_csv(r)),
    ]
}

/// Writes all files or none: anything written before a failure is removed.
pub fn write_bundle(out: &Path, files: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, contents) in files {
        let path = out.join(name);
        if let Err(e) = std::fs::write(&path, contents) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(CliError::io(path, e));
        }
        written.push(path);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub scorer: String,
    pub target: String,
    pub report: EvalReport<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub source: String,
    pub in_domain: Vec<ScorerResult>,
    pub transfer: Vec<TransferResult>,
    pub matrix: CrossMatrix,
    pub mean_gains: Vec<MeanGain>,
}

/// Trains on the source split, takes the source test performance as the
/// baseline, and tests on every image of each target. A target that is the
/// source itself reuses the source test split, so its gain is zero.
pub fn run_cross_on(config: &ExperimentConfig, source: &Dataset, targets: &[(Dataset, bool)]) -> Result<CrossReport> {
    let kinds = config.validate_scorers()?;
    if targets.is_empty() {
        return Err(CliError::Config("cross-database run needs at least one target".into()));
    }
    let run = train_on(config, &kinds, source)?;
    let mut in_domain = Vec::new();
    for pred in &run.predictors {
        let (_, report) = evaluate_on(pred, &run.traj, source, &run.features, &run.test_idx, config.prefit)?;
        in_domain.push(ScorerResult::new(pred.name(), report));
    }
    let mut transfer = Vec::new();
    for (target, is_source) in targets {
        if *is_source {
            for r in &in_domain {
                transfer.push(TransferResult {
                    scorer: r.scorer.clone(),
                    target: target.name.clone(),
                    report: r.report.clone(),
                });
            }
            continue;
        }
        let features = FeatureTable::compute(target, &run.traj, &feature_maps(&kinds))?;
        let all: Vec<usize> = (0..target.items.len()).collect();
        for pred in &run.predictors {
            let (_, report) = evaluate_on(pred, &run.traj, target, &features, &all, config.prefit)?;
            transfer.push(TransferResult {
                scorer: pred.name().to_string(),
                target: target.name.clone(),
                report,
            });
        }
    }
    let base: Vec<(String, EvalReport<f64>)> = in_domain.iter().map(|r| (r.scorer.clone(), r.report.clone())).collect();
    let tr: Vec<(String, String, EvalReport<f64>)> = transfer
        .iter()
        .map(|t| (t.scorer.clone(), t.target.clone(), t.report.clone()))
        .collect();
    let matrix = CrossMatrix::from_reports(&source.name, &base, &tr).map_err(|e| CliError::data(Stage::Evaluate, e))?;
    Ok(CrossReport {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        seed: config.seed,
        config: config.clone(),
        source: source.name.clone(),
        mean_gains: matrix.mean_gains(),
        in_domain,
        transfer,
        matrix,
    })
}

pub fn run_cross(config: &ExperimentConfig) -> Result<CrossReport> {
    config.validate()?;
    if config.targets.is_empty() {
        return Err(CliError::Config("cross-database run needs at least one target".into()));
    }
    let source = Dataset::load(&config.source)?;
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let src_path = canon(&config.source);
    let targets = config
        .targets
        .iter()
        .map(|t| {
            if canon(t) == src_path {
                Ok((source.clone(), true))
            } else {
                Dataset::load(t).map(|d| (d, false))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let report = run_cross_on(config, &source, &targets)?;
    if let Some(out) = &config.out {
        write_bundle(out, &cross_files(&report))?;
    }
    Ok(report)
}

pub fn cross_markdown(r: &CrossReport) -> String {
    let mut s = format!(
        "# {} cross-database, source {}\n\n{}\n\n",
        TOOL,
        r.source,
        stamp(&r.config_hash, r.seed)
    );
    s.push_str("| Scorer | in-domain PLCC | in-domain SRCC |\n|---|---|---|\n");
    for res in &r.in_domain {
        let _ = writeln!(
            s,
            "| {} | {} | {} |",
            res.scorer,
            fmt_corr(Some(res.report.plcc)),
            fmt_corr(Some(res.report.srcc))
        );
    }
    s.push('\n');
    s.push_str(&r.matrix.to_markdown());
    s
}

pub fn cross_files(r: &CrossReport) -> Vec<(String, String)> {
    vec![
        (
            "cross.json".into(),
            serde_json::to_string_pretty(r).expect("report serializes") + "\n",
        ),
        ("cross.md".into(), cross_markdown(r)),
        (
            "cross.csv".into(),
            format!("# {}\n{}", stamp(&r.config_hash, r.seed), r.matrix.to_csv()),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;
    use std::sync::OnceLock;

    use panoiqa_core::{DistortionType, ScopeKind};

    use super::*;
    use crate::synth::{run_synth, SynthOptions};

    /// One small on-disk database shared by the tests below.
    fn database() -> &'static Path {
        static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
        let (_, root) = DIR.get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let root = dir.path().join("small");
            let opts = SynthOptions {
                name: "small".into(),
                sources: 10,
                width: 512,
                height: 256,
                types: vec![DistortionType::Gb, DistortionType::Gn],
                levels: 2,
                scopes: vec![ScopeKind::Homogeneous],
                seed: 5,
            };
            run_synth(&opts, &root).unwrap();
            (dir, root)
        });
        root
    }

    fn manifest() -> PathBuf {
        database().join("manifest.csv")
    }

    fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn rerun_writes_byte_identical_bundle() {
        let out = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::new(manifest(), &["composite", "sharpness"]);
        config.seed = 3;
        config.out = Some(out.path().join("a"));
        let r = run_experiment(&config).unwrap();
        config.out = Some(out.path().join("b"));
        run_experiment(&config).unwrap();
        let (a, b) = (
            read_dir_sorted(&out.path().join("a")),
            read_dir_sorted(&out.path().join("b")),
        );
        assert_eq!(a, b);
        let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["predictions.csv", "report.json", "report.md"]);
        let csv = String::from_utf8(a[0].1.clone()).unwrap();
        assert!(csv.starts_with(&format!("# config_hash={} seed=3\n", config.hash())));
        assert_eq!(r.n_train + r.n_test, 50);
        assert!(
            r.results[0].report.srcc > 0.5,
            "composite SRCC {}",
            r.results[0].report.srcc
        );
    }

    #[test]
    fn seed_changes_the_split() {
        let ds = Dataset::load(&manifest()).unwrap();
        let a = assign_splits(&ds, 0.8, 1, false).unwrap();
        let b = assign_splits(&ds, 0.8, 2, false).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, assign_splits(&ds, 0.8, 1, false).unwrap());
    }

    #[test]
    fn unknown_scorer_fails_before_any_compute() {
        // the manifest does not even exist: scorer validation comes first
        let config = ExperimentConfig::new("/nonexistent/manifest.csv", &["composite", "brisque"]);
        let e = run_experiment(&config).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("brisque"), "{e}");
    }

    #[test]
    fn diagonal_cross_gain_is_zero() {
        let mut config = ExperimentConfig::new(manifest(), &["linear"]);
        config.targets = vec![manifest()];
        let r = run_cross(&config).unwrap();
        assert_eq!(r.transfer.len(), 1);
        assert_eq!(r.transfer[0].report, r.in_domain[0].report);
        for g in &r.mean_gains {
            assert_eq!(g.mean_gain, Some(0.0));
        }
    }
}
