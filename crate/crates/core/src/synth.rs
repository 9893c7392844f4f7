//! Procedural source panoramas and seeded synthetic quality databases.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distortion::{
    apply_distortion, DistortionError, DistortionSpec, DistortionType, Scope, DEFAULT_CAP_RADIUS_DEG, LENS_COUNT,
    MAX_LEVEL,
};
use crate::raster::{ErpImage, RasterError};

pub const MIN_SOURCES: usize = 3;
pub const PRISTINE_MOS: f64 = 5.0;
/// Fraction of the MOS drop kept by a heterogeneous distortion.
pub const HETEROGENEOUS_IMPACT: f64 = 0.6;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("at least {MIN_SOURCES} source images are required, got {0}")]
    TooFewSources(usize),
    #[error("plan must list at least one distortion type and one scope")]
    EmptyPlan,
    #[error("levels must lie in 1..=5, got {0}")]
    Levels(u8),
    #[error("duplicate source id `{0}`")]
    DuplicateSource(String),
    #[error(transparent)]
    Distortion(#[from] DistortionError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeKind {
    Homogeneous,
    Heterogeneous,
}

impl ScopeKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Homogeneous => "homogeneous",
            Self::Heterogeneous => "heterogeneous",
        }
    }
}

impl std::str::FromStr for ScopeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "homogeneous" | "homo" => Ok(Self::Homogeneous),
            "heterogeneous" | "hetero" => Ok(Self::Heterogeneous),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabasePlan {
    pub name: String,
    pub types: Vec<DistortionType>,
    /// Levels `1..=levels` are generated; also the `levels_max` of the MOS map.
    pub levels: u8,
    pub scopes: Vec<ScopeKind>,
    pub cap_radius_deg: f64,
}

impl DatabasePlan {
    pub fn new(name: impl Into<String>, types: Vec<DistortionType>, levels: u8, scopes: Vec<ScopeKind>) -> Self {
        Self {
            name: name.into(),
            types,
            levels,
            scopes,
            cap_radius_deg: DEFAULT_CAP_RADIUS_DEG,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.types.is_empty() || self.scopes.is_empty() {
            return Err(SynthError::EmptyPlan);
        }
        if !(1..=MAX_LEVEL).contains(&self.levels) {
            return Err(SynthError::Levels(self.levels));
        }
        Ok(())
    }
}

/// `5 − 4·q(level/levels_max)`, clamped to `[1, 5]`.
pub fn synthetic_mos(level: u8, levels_max: u8, scope: ScopeKind) -> f64 {
    let r = f64::from(level) / f64::from(levels_max);
    let q = match scope {
        ScopeKind::Homogeneous => r,
        ScopeKind::Heterogeneous => HETEROGENEOUS_IMPACT * r,
    };
    (5.0 - 4.0 * q).clamp(1.0, 5.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub id: String,
    pub source_id: String,
    /// `None` for pristine originals.
    pub spec: Option<DistortionSpec>,
    pub mos: f64,
    /// Path relative to the database root.
    pub path: PathBuf,
    /// Path of the pristine original, for distorted records.
    pub reference_path: Option<PathBuf>,
    pub image: ErpImage,
}

impl SyntheticRecord {
    pub fn distortion_tag(&self) -> Option<String> {
        self.spec
            .map(|s| format!("{}:{}:L{}", s.kind.distortion_type(), s.scope.tag(), s.level))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatabase {
    pub name: String,
    pub seed: u64,
    pub records: Vec<SyntheticRecord>,
}

impl SyntheticDatabase {
    /// Writes every record image as PNG below `root`, creating directories.
    pub fn write_images(&self, root: &Path) -> Result<(), SynthError> {
        for r in &self.records {
            let path = root.join(&r.path);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            r.image.save_png(&path)?;
        }
        Ok(())
    }

    pub fn pristine(&self) -> impl Iterator<Item = &SyntheticRecord> {
        self.records.iter().filter(|r| r.spec.is_none())
    }

    pub fn distorted(&self) -> impl Iterator<Item = &SyntheticRecord> {
        self.records.iter().filter(|r| r.spec.is_some())
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-record seed: independent of generation order and thread count.
pub fn record_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, then mixed with the run seed
    let h = id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    });
    mix64(seed ^ mix64(h))
}

struct Job<'a> {
    source: &'a ErpImage,
    ty: DistortionType,
    level: u8,
    scope: ScopeKind,
}

/// Generates pristine copies plus the cartesian product
/// `sources × types × levels × scopes`. Record order is fixed: for each
/// source, the pristine original followed by its distortions.
pub fn build_database(sources: &[ErpImage], plan: &DatabasePlan, seed: u64) -> Result<SyntheticDatabase, SynthError> {
    if sources.len() < MIN_SOURCES {
        return Err(SynthError::TooFewSources(sources.len()));
    }
    plan.validate()?;
    let mut seen = std::collections::BTreeSet::new();
    for s in sources {
        if !seen.insert(s.id()) {
            return Err(SynthError::DuplicateSource(s.id().to_string()));
        }
    }
    let cap_radius = plan.cap_radius_deg.to_radians();

    let mut jobs: Vec<Option<Job>> = Vec::new();
    for source in sources {
        jobs.push(None);
        for &ty in &plan.types {
            for level in 1..=plan.levels {
                for &scope in &plan.scopes {
                    jobs.push(Some(Job {
                        source,
                        ty,
                        level,
                        scope,
                    }));
                }
            }
        }
    }
    let mut source_index = Vec::with_capacity(jobs.len());
    let mut current = 0;
    for (i, j) in jobs.iter().enumerate() {
        if j.is_none() && i > 0 {
            current += 1;
        }
        source_index.push(current);
    }

    let records = jobs
        .par_iter()
        .zip(source_index.par_iter())
        .map(|(job, &si)| -> Result<SyntheticRecord, SynthError> {
            let Some(job) = job else {
                let src = &sources[si];
                return Ok(SyntheticRecord {
                    id: src.id().to_string(),
                    source_id: src.id().to_string(),
                    spec: None,
                    mos: PRISTINE_MOS,
                    path: pristine_path(src.id()),
                    reference_path: None,
                    image: src.clone(),
                });
            };
            let src_id = job.source.id();
            let id = format!("{src_id}_{}_{}_L{}", job.ty, job.scope.tag(), job.level);
            let rseed = record_seed(seed, &id);
            let mut rng = ChaCha8Rng::seed_from_u64(rseed);
            let scope = match job.scope {
                ScopeKind::Homogeneous => Scope::Homogeneous,
                ScopeKind::Heterogeneous => Scope::Heterogeneous {
                    lens_index: rng.gen_range(0..LENS_COUNT),
                    cap_radius,
                },
            };
            let seam_lon = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let spec = DistortionSpec::from_level(job.ty, job.level, scope, seam_lon)?;
            let mut image = apply_distortion(job.source, &spec, rng.gen())?;
            image.set_id(id.clone());
            Ok(SyntheticRecord {
                path: PathBuf::from(job.ty.tag())
                    .join(job.scope.tag())
                    .join(format!("{src_id}_L{}.png", job.level)),
                reference_path: Some(pristine_path(src_id)),
                id,
                source_id: src_id.to_string(),
                spec: Some(spec),
                mos: synthetic_mos(job.level, plan.levels, job.scope),
                image,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SyntheticDatabase {
        name: plan.name.clone(),
        seed,
        records,
    })
}

fn pristine_path(id: &str) -> PathBuf {
    PathBuf::from("pristine").join(format!("{id}.png"))
}

/// Deterministic synthetic panorama: a smooth latitude-dependent backdrop
/// with hard-edged flat blocks and discs. Flat interiors keep the pristine
/// Laplacian spread near zero; the edges carry the sharpness.
pub fn procedural_panorama(
    id: impl Into<String>,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<ErpImage, RasterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
    let (wf, hf) = (width as f64, height as f64);
    let mut plane = vec![0.0f64; width * height * 3];

    let sky: [f64; 3] = std::array::from_fn(|_| rng.gen_range(90.0..200.0));
    let ground: [f64; 3] = std::array::from_fn(|_| rng.gen_range(40.0..150.0));
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(1.0..4.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(5.0..20.0),
            )
        })
        .collect();
    for y in 0..height {
        let t = (y as f64 + 0.5) / hf;
        for x in 0..width {
            let lon = (x as f64 + 0.5) / wf * std::f64::consts::TAU;
            let wave: f64 = waves.iter().map(|&(k, ph, a)| a * (k * lon + ph).sin()).sum();
            let o = (y * width + x) * 3;
            for c in 0..3 {
                plane[o + c] = sky[c] * (1.0 - t) + ground[c] * t + wave;
            }
        }
    }

    let shapes = 400 + rng.gen_range(0..20);
    for _ in 0..shapes {
        let color: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..255.0));
        let cx = rng.gen_range(0.0..wf);
        let cy = rng.gen_range(0.0..hf);
        let rx = rng.gen_range(0.01..0.015) * wf;
        let ry = rx * rng.gen_range(0.5..1.5);
        let disc = rng.gen_bool(0.5);
        let y0 = (cy - ry).floor().max(0.0) as usize;
        let y1 = ((cy + ry).ceil() as usize).min(height);
        let x0 = (cx - rx).floor() as isize;
        let x1 = (cx + rx).ceil() as isize;
        for y in y0..y1 {
            let dy = (y as f64 + 0.5 - cy) / ry;
            for xi in x0..x1 {
                let dx = (xi as f64 + 0.5 - cx) / rx;
                if disc && dx * dx + dy * dy > 1.0 {
                    continue;
                }
                let x = xi.rem_euclid(width as isize) as usize;
                let o = (y * width + x) * 3;
                plane[o..o + 3].copy_from_slice(&color);
            }
        }
    }

    let data = plane.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    ErpImage::new(id, width, height, data)
}

/// `count` procedural sources named `src00`, `src01`, ….
pub fn procedural_sources(count: usize, seed: u64, width: usize, height: usize) -> Result<Vec<ErpImage>, RasterError> {
    (0..count)
        .into_par_iter()
        .map(|i| procedural_panorama(format!("src{i:02}"), mix64(seed.wrapping_add(i as u64)), width, height))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(n: usize) -> Vec<ErpImage> {
        procedural_sources(n, 7, 128, 64).unwrap()
    }

    #[test]
    fn mos_endpoints() {
        assert_eq!(synthetic_mos(5, 5, ScopeKind::Homogeneous), 1.0);
        assert_eq!(synthetic_mos(5, 5, ScopeKind::Heterogeneous), 2.6);
        assert!((synthetic_mos(1, 5, ScopeKind::Homogeneous) - 4.2).abs() < 1e-12);
        for scope in [ScopeKind::Homogeneous, ScopeKind::Heterogeneous] {
            let m: Vec<f64> = (1..=5).map(|l| synthetic_mos(l, 5, scope)).collect();
            assert!(m.windows(2).all(|p| p[1] <= p[0]));
        }
    }

    #[test]
    fn counting() {
        let plan = DatabasePlan::new("t", vec![DistortionType::Gb], 1, vec![ScopeKind::Homogeneous]);
        let db = build_database(&sources(3), &plan, 1).unwrap();
        assert_eq!(db.records.len(), 6);
        assert_eq!(db.pristine().count(), 3);
        assert!(db.pristine().all(|r| r.mos == PRISTINE_MOS));
        assert_eq!(db.distorted().next().unwrap().mos, 1.0);
    }

    #[test]
    fn record_layout() {
        let plan = DatabasePlan::new(
            "t",
            vec![DistortionType::Gn, DistortionType::St],
            2,
            vec![ScopeKind::Homogeneous, ScopeKind::Heterogeneous],
        );
        let db = build_database(&sources(3), &plan, 1).unwrap();
        assert_eq!(db.records.len(), 3 * (1 + 2 * 2 * 2));
        let r = &db.records[1];
        assert_eq!(r.id, "src00_gn_homogeneous_L1");
        assert_eq!(r.path, PathBuf::from("gn/homogeneous/src00_L1.png"));
        assert_eq!(r.reference_path, Some(PathBuf::from("pristine/src00.png")));
        assert_eq!(r.distortion_tag().as_deref(), Some("gn:homogeneous:L1"));
        let ids: std::collections::BTreeSet<_> = db.records.iter().map(|r| &r.id).collect();
        assert_eq!(ids.len(), db.records.len());
    }

    #[test]
    fn deterministic() {
        let plan = DatabasePlan::new(
            "t",
            vec![DistortionType::Gn, DistortionType::Gb],
            2,
            vec![ScopeKind::Heterogeneous],
        );
        let src = sources(3);
        assert_eq!(
            build_database(&src, &plan, 11).unwrap(),
            build_database(&src, &plan, 11).unwrap()
        );
        assert_ne!(
            build_database(&src, &plan, 11).unwrap(),
            build_database(&src, &plan, 12).unwrap()
        );
    }

    #[test]
    fn rejects_bad_plans() {
        let plan = DatabasePlan::new("t", vec![DistortionType::Gb], 1, vec![ScopeKind::Homogeneous]);
        assert!(matches!(
            build_database(&sources(2), &plan, 0),
            Err(SynthError::TooFewSources(2))
        ));
        let empty = DatabasePlan::new("t", vec![], 1, vec![ScopeKind::Homogeneous]);
        assert!(matches!(
            build_database(&sources(3), &empty, 0),
            Err(SynthError::EmptyPlan)
        ));
        let deep = DatabasePlan::new("t", vec![DistortionType::Gb], 6, vec![ScopeKind::Homogeneous]);
        assert!(matches!(
            build_database(&sources(3), &deep, 0),
            Err(SynthError::Levels(6))
        ));
    }

    #[test]
    fn procedural_sources_differ() {
        let s = sources(3);
        assert_ne!(s[0].data(), s[1].data());
        assert_eq!(s[0], procedural_panorama("src00", mix64(7), 128, 64).unwrap());
    }

    #[test]
    fn record_seeds_depend_on_id_and_seed() {
        assert_ne!(record_seed(1, "a"), record_seed(1, "b"));
        assert_ne!(record_seed(1, "a"), record_seed(2, "a"));
        assert_eq!(record_seed(3, "x"), record_seed(3, "x"));
    }
}
