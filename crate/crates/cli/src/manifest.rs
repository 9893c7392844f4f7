//! CSV dataset manifests.
//!
//! One row per image, header `id,path,mos,mos2,reference_path,distortion,split`.
//! Optional columns may be left empty. Paths are relative to the manifest's
//! directory and must stay inside it.

use std::collections::HashMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use panoiqa_core::Split;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER: [&str; 7] = ["id", "path", "mos", "mos2", "reference_path", "distortion", "split"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub path: PathBuf,
    pub mos: f64,
    pub mos2: Option<f64>,
    pub reference_path: Option<PathBuf>,
    pub distortion: Option<String>,
    pub split: Option<Split>,
}

impl ManifestRow {
    /// Row carries a second rating that must be merged before use.
    pub fn is_dual_mos(&self) -> bool {
        self.mos2.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestErrorKind {
    Io(String),
    Header(String),
    Columns { expected: usize, found: usize },
    Encoding,
    EmptyField(&'static str),
    Number { field: &'static str, value: String },
    NonFinite { field: &'static str },
    Split(String),
    DuplicateId { id: String, first_line: u64 },
    PathEscapesRoot(String),
    MissingFile(String),
    Empty,
}

impl fmt::Display for ManifestErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "cannot read manifest: {e}"),
            Self::Header(h) => write!(f, "header must be `{}`, found `{h}`", HEADER.join(",")),
            Self::Columns { expected, found } => write!(f, "expected {expected} columns, found {found}"),
            Self::Encoding => f.write_str("row is not valid UTF-8 CSV"),
            Self::EmptyField(name) => write!(f, "`{name}` must not be empty"),
            Self::Number { field, value } => write!(f, "`{field}` is not a number: `{value}`"),
            Self::NonFinite { field } => write!(f, "`{field}` must be finite"),
            Self::Split(s) => write!(f, "split must be `train`, `test` or empty, found `{s}`"),
            Self::DuplicateId { id, first_line } => write!(f, "duplicate id `{id}` (first seen on line {first_line})"),
            Self::PathEscapesRoot(p) => write!(f, "path `{p}` must be relative and stay inside the manifest directory"),
            Self::MissingFile(p) => write!(f, "file `{p}` does not exist"),
            Self::Empty => f.write_str("manifest has no rows"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}:{line}: {kind}")]
pub struct ManifestError {
    pub file: String,
    /// 1-based physical line; 0 when the error is not tied to a line.
    pub line: u64,
    pub kind: ManifestErrorKind,
}

fn relative_inside(raw: &str) -> Option<PathBuf> {
    let p = Path::new(raw);
    let ok = p
        .components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    (ok && !raw.is_empty()).then(|| p.to_path_buf())
}

fn parse_f64(field: &'static str, raw: &str) -> Result<f64, ManifestErrorKind> {
    let v: f64 = raw.trim().parse().map_err(|_| ManifestErrorKind::Number {
        field,
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(ManifestErrorKind::NonFinite { field });
    }
    Ok(v)
}

fn non_empty(s: &str) -> Option<&str> {
    let t = s.trim();
    (!t.is_empty()).then_some(t)
}

fn parse_row(rec: &csv::StringRecord) -> Result<ManifestRow, ManifestErrorKind> {
    if rec.len() != HEADER.len() {
        return Err(ManifestErrorKind::Columns {
            expected: HEADER.len(),
            found: rec.len(),
        });
    }
    let id = non_empty(&rec[0])
        .ok_or(ManifestErrorKind::EmptyField("id"))?
        .to_string();
    let path_raw = non_empty(&rec[1]).ok_or(ManifestErrorKind::EmptyField("path"))?;
    let path = relative_inside(path_raw).ok_or_else(|| ManifestErrorKind::PathEscapesRoot(path_raw.to_string()))?;
    let mos = parse_f64("mos", non_empty(&rec[2]).ok_or(ManifestErrorKind::EmptyField("mos"))?)?;
    let mos2 = non_empty(&rec[3]).map(|s| parse_f64("mos2", s)).transpose()?;
    let reference_path = non_empty(&rec[4])
        .map(|s| relative_inside(s).ok_or_else(|| ManifestErrorKind::PathEscapesRoot(s.to_string())))
        .transpose()?;
    let distortion = non_empty(&rec[5]).map(str::to_string);
    let split = non_empty(&rec[6])
        .map(|s| s.parse::<Split>().map_err(|_| ManifestErrorKind::Split(s.to_string())))
        .transpose()?;
    Ok(ManifestRow {
        id,
        path,
        mos,
        mos2,
        reference_path,
        distortion,
        split,
    })
}

/// Parses manifest text. With `check_files`, every referenced path must
/// exist below `root`.
pub fn parse_manifest(
    text: &str,
    file: &str,
    name: &str,
    root: &Path,
    check_files: bool,
) -> Result<DatasetManifest, ManifestError> {
    let err = |line: u64, kind| ManifestError {
        file: file.to_string(),
        line,
        kind,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(err(1, ManifestErrorKind::Header(String::new()))),
        Some(Err(_)) => return Err(err(1, ManifestErrorKind::Encoding)),
        Some(Ok(h)) => h,
    };
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != HEADER {
        return Err(err(1, ManifestErrorKind::Header(found.join(","))));
    }

    let mut rows = Vec::new();
    let mut first_seen: HashMap<String, u64> = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, ManifestErrorKind::Encoding)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        let row = parse_row(&rec).map_err(|k| err(line, k))?;
        if let Some(&first_line) = first_seen.get(&row.id) {
            return Err(err(line, ManifestErrorKind::DuplicateId { id: row.id, first_line }));
        }
        if check_files {
            for p in std::iter::once(&row.path).chain(row.reference_path.as_ref()) {
                if !root.join(p).is_file() {
                    return Err(err(line, ManifestErrorKind::MissingFile(p.display().to_string())));
                }
            }
        }
        first_seen.insert(row.id.clone(), line);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(0, ManifestErrorKind::Empty));
    }
    Ok(DatasetManifest {
        name: name.to_string(),
        root: root.to_path_buf(),
        rows,
        schema_version: SCHEMA_VERSION,
    })
}

/// Loads and validates a manifest file. The dataset name is the file stem
/// unless the stem is the generic `manifest`, in which case the parent
/// directory name is used.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError {
        file: file.clone(),
        line: 0,
        kind: ManifestErrorKind::Io(e.to_string()),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = if stem == "manifest" {
        root.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(stem)
    } else {
        stem
    };
    parse_manifest(&text, &file, &name, &root, true)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Serializes rows with the canonical header, LF line endings.
pub fn write_manifest(rows: &[ManifestRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.id.clone(),
            path_str(&r.path),
            r.mos.to_string(),
            opt(&r.mos2),
            r.reference_path.as_deref().map(path_str).unwrap_or_default(),
            r.distortion.clone().unwrap_or_default(),
            opt(&r.split),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Forward-slash rendering so manifests are portable.
fn path_str(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}
