//! `synth`: procedural sources → distorted database → PNGs + manifest.

use std::path::Path;

use panoiqa_core::synth::{procedural_sources, MIN_SOURCES};
use panoiqa_core::{build_database, DatabasePlan, DistortionType, ScopeKind, SyntheticDatabase};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result, Stage};
use crate::experiment::write_bundle;
use crate::manifest::{write_manifest, ManifestRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub name: String,
    pub sources: usize,
    pub width: usize,
    pub height: usize,
    pub types: Vec<DistortionType>,
    pub levels: u8,
    pub scopes: Vec<ScopeKind>,
    pub seed: u64,
}

impl SynthOptions {
    pub fn plan(&self) -> DatabasePlan {
        DatabasePlan::new(&self.name, self.types.clone(), self.levels, self.scopes.clone())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_string(self).expect("options serialize").as_bytes(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
    pub options: SynthOptions,
    pub records: usize,
    pub pristine: usize,
}

/// Generates the database in memory.
pub fn generate(opts: &SynthOptions) -> Result<SyntheticDatabase> {
    if opts.sources < MIN_SOURCES {
        return Err(CliError::Config(format!(
            "need at least {MIN_SOURCES} sources, got {}",
            opts.sources
        )));
    }
    let sources = procedural_sources(opts.sources, opts.seed, opts.width, opts.height)
        .map_err(|e| CliError::Config(format!("invalid source size: {e}")))?;
    build_database(&sources, &opts.plan(), opts.seed).map_err(|e| CliError::Config(e.to_string()))
}

pub fn manifest_rows(db: &SyntheticDatabase) -> Vec<ManifestRow> {
    db.records
        .iter()
        .map(|r| ManifestRow {
            id: r.id.clone(),
            path: r.path.clone(),
            mos: r.mos,
            mos2: None,
            reference_path: r.reference_path.clone(),
            distortion: r.distortion_tag(),
            split: None,
        })
        .collect()
}

/// Writes images, `manifest.csv` and `synth.json` below `out`. On failure
/// the output directory is removed if this call created it.
pub fn run_synth(opts: &SynthOptions, out: &Path) -> Result<SynthSummary> {
    let db = generate(opts)?;
    let summary = SynthSummary {
        tool: crate::experiment::TOOL.into(),
        config_hash: opts.hash(),
        seed: opts.seed,
        options: opts.clone(),
        records: db.records.len(),
        pristine: db.pristine().count(),
    };
    let created = !out.exists();
    let result = db
        .write_images(out)
        .map_err(|e| CliError::data(Stage::Write, e))
        .and_then(|()| {
            write_bundle(
                out,
                &[
                    ("manifest.csv".into(), write_manifest(&manifest_rows(&db))),
                    (
                        "synth.json".into(),
                        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
                    ),
                ],
            )
        });
    if let Err(e) = result {
        if created {
            let _ = std::fs::remove_dir_all(out);
        }
        return Err(e);
    }
    Ok(summary)
}
