//! Gap/gain arithmetic, saturation classes, cross-database matrices and
//! database ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalReport;
use crate::scalar::Scalar;

pub const SATURATED_THRESHOLD: f64 = 0.96;
pub const UNDERSATURATED_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("correlation undefined for saturation classification")]
    UndefinedCorrelation,
    #[error("value for `{0}` is undefined")]
    UndefinedValue(String),
    #[error("rank vectors must be permutations of 1..={n}; `{perspective}` is not")]
    NotPermutation { perspective: String, n: usize },
    #[error("rank vector length {actual} differs from {expected} databases")]
    Length { expected: usize, actual: usize },
    #[error("no rank vectors supplied")]
    Empty,
    #[error("no in-domain result for model `{0}`")]
    MissingScorer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Plcc,
    Srcc,
}

impl Metric {
    pub const BOTH: [Metric; 2] = [Metric::Plcc, Metric::Srcc];

    pub fn of<T: Scalar>(self, report: &EvalReport<T>) -> T {
        match self {
            Metric::Plcc => report.plcc,
            Metric::Srcc => report.srcc,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Plcc => "PLCC",
            Metric::Srcc => "SRCC",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PLCC" => Ok(Metric::Plcc),
            "SRCC" => Ok(Metric::Srcc),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Relative change `(p_test − p_ori)/p_ori·100`. `None` when `p_ori` is zero
/// or either input is not finite.
pub fn gap<T: Scalar>(p_ori: T, p_test: T) -> Option<T> {
    if p_ori == T::zero() || !p_ori.is_finite() || !p_test.is_finite() {
        return None;
    }
    Some((p_test - p_ori) / p_ori * T::lit(100.0))
}

/// Gain between a source-domain and a transferred performance; same formula
/// as [`gap`].
pub fn gain<T: Scalar>(p_ori: T, p_test: T) -> Option<T> {
    gap(p_ori, p_test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub model: String,
    pub database: String,
    pub metric: Metric,
    pub p_ori: Option<f64>,
    pub p_test: f64,
    pub gap_percent: Option<f64>,
}

impl GapRecord {
    pub fn new(
        model: impl Into<String>,
        database: impl Into<String>,
        metric: Metric,
        p_ori: Option<f64>,
        p_test: f64,
    ) -> Self {
        Self {
            model: model.into(),
            database: database.into(),
            metric,
            p_ori,
            p_test,
            gap_percent: p_ori.and_then(|p| gap(p, p_test)),
        }
    }
}

/// Mean over defined values; `None` if none is defined.
pub fn mean_defined<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean gap of the records; undefined gaps are skipped.
pub fn mean_gap(records: &[GapRecord]) -> Option<f64> {
    mean_defined(records.iter().map(|r| r.gap_percent))
}

/// Mean gap per `(database, metric)`.
pub fn mean_gap_table(records: &[GapRecord]) -> BTreeMap<(String, Metric), Option<f64>> {
    let mut groups: BTreeMap<(String, Metric), Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.database.clone(), r.metric))
            .or_default()
            .push(r.gap_percent);
    }
    groups.into_iter().map(|(k, v)| (k, mean_defined(v))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Saturation {
    Saturated,
    Intermediate,
    Undersaturated,
}

/// `Saturated` iff `min(plcc, srcc) ≥ 0.96`, `Undersaturated` iff the
/// minimum is below `0.85`.
pub fn classify_saturation(plcc: f64, srcc: f64) -> Result<Saturation, AnalysisError> {
    if !plcc.is_finite() || !srcc.is_finite() {
        return Err(AnalysisError::UndefinedCorrelation);
    }
    let m = plcc.min(srcc);
    Ok(if m >= SATURATED_THRESHOLD {
        Saturation::Saturated
    } else if m < UNDERSATURATED_THRESHOLD {
        Saturation::Undersaturated
    } else {
        Saturation::Intermediate
    })
}

pub fn classify_report<T: Scalar>(report: &EvalReport<T>) -> Result<Saturation, AnalysisError> {
    classify_saturation(report.plcc.to_f64_lossy(), report.srcc.to_f64_lossy())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub model: String,
    pub target: String,
    pub metric: Metric,
    pub p_ori: f64,
    pub p_test: f64,
    pub gain_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub source_database: String,
    /// Sorted by `(model, target, metric)` insertion order of the caller.
    pub cells: Vec<CrossCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanGain {
    pub target: String,
    pub metric: Metric,
    pub mean_gain: Option<f64>,
}

impl CrossMatrix {
    pub fn new(source_database: impl Into<String>) -> Self {
        Self {
            source_database: source_database.into(),
            cells: Vec::new(),
        }
    }

    /// Adds or replaces a cell.
    pub fn insert(&mut self, model: &str, target: &str, metric: Metric, p_ori: f64, p_test: f64) {
        let cell = CrossCell {
            model: model.to_string(),
            target: target.to_string(),
            metric,
            p_ori,
            p_test,
            gain_percent: gain(p_ori, p_test),
        };
        match self
            .cells
            .iter_mut()
            .find(|c| c.model == model && c.target == target && c.metric == metric)
        {
            Some(c) => *c = cell,
            None => self.cells.push(cell),
        }
    }

    /// Builds the matrix from in-domain reports (the baselines) and transfer
    /// reports `(model, target, report)`.
    pub fn from_reports<T: Scalar>(
        source_database: &str,
        in_domain: &[(String, EvalReport<T>)],
        transfer: &[(String, String, EvalReport<T>)],
    ) -> Result<Self, AnalysisError> {
        let mut m = Self::new(source_database);
        for (model, target, report) in transfer {
            let base = in_domain
                .iter()
                .find(|(name, _)| name == model)
                .map(|(_, r)| r)
                .ok_or_else(|| AnalysisError::MissingScorer(model.clone()))?;
            for metric in Metric::BOTH {
                m.insert(
                    model,
                    target,
                    metric,
                    metric.of(base).to_f64_lossy(),
                    metric.of(report).to_f64_lossy(),
                );
            }
        }
        Ok(m)
    }

    pub fn cell(&self, model: &str, target: &str, metric: Metric) -> Option<&CrossCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.target == target && c.metric == metric)
    }

    /// Models in first-appearance order.
    pub fn models(&self) -> Vec<&str> {
        first_appearance(self.cells.iter().map(|c| c.model.as_str()))
    }

    /// Targets in first-appearance order.
    pub fn targets(&self) -> Vec<&str> {
        first_appearance(self.cells.iter().map(|c| c.target.as_str()))
    }

    /// Mean over models with a defined gain.
    pub fn mean_gain(&self, target: &str, metric: Metric) -> Option<f64> {
        mean_defined(
            self.cells
                .iter()
                .filter(|c| c.target == target && c.metric == metric)
                .map(|c| c.gain_percent),
        )
    }

    pub fn mean_gains(&self) -> Vec<MeanGain> {
        self.targets()
            .into_iter()
            .flat_map(|t| {
                Metric::BOTH.map(|metric| MeanGain {
                    target: t.to_string(),
                    metric,
                    mean_gain: self.mean_gain(t, metric),
                })
            })
            .collect()
    }

    /// Markdown with one row of transferred performances per model followed
    /// by its `gain:` row, and a closing mean-gain row.
    pub fn to_markdown(&self) -> String {
        let targets = self.targets();
        let mut out = format!("Source: {}\n\n| Model |", self.source_database);
        for t in &targets {
            let _ = write!(out, " {t} PLCC | {t} SRCC |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(targets.len() * 2));
        out.push('\n');
        for model in self.models() {
            let mut perf = format!("| {model} |");
            let mut gains = format!("| gain: {model} |");
            for t in &targets {
                for metric in Metric::BOTH {
                    let c = self.cell(model, t, metric);
                    let _ = write!(perf, " {} |", fmt_corr(c.map(|c| c.p_test)));
                    let _ = write!(gains, " {} |", fmt_pct(c.and_then(|c| c.gain_percent)));
                }
            }
            out.push_str(&perf);
            out.push('\n');
            out.push_str(&gains);
            out.push('\n');
        }
        out.push_str("| Mean gain |");
        for t in &targets {
            for metric in Metric::BOTH {
                let _ = write!(out, " {} |", fmt_pct(self.mean_gain(t, metric)));
            }
        }
        out.push('\n');
        out
    }

    /// CSV rows `source,model,target,metric,p_ori,p_test,gain_percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,model,target,metric,p_ori,p_test,gain_percent\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.source_database,
                c.model,
                c.target,
                c.metric,
                c.p_ori,
                c.p_test,
                c.gain_percent.map(|g| g.to_string()).unwrap_or_default()
            );
        }
        out
    }
}

fn first_appearance<'a>(it: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    it.filter(|s| seen.insert(*s)).collect()
}

/// Correlation formatted to three decimals, `-` when undefined.
pub fn fmt_corr(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3}"),
        _ => "-".to_string(),
    }
}

/// Percentage formatted to one decimal, `-` when undefined.
pub fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.1}%"),
        _ => "-".to_string(),
    }
}

/// Markdown for gap records: a performance row and a `gain:` row per model.
pub fn gap_table_markdown(records: &[GapRecord]) -> String {
    let models = first_appearance(records.iter().map(|r| r.model.as_str()));
    let dbs = first_appearance(records.iter().map(|r| r.database.as_str()));
    let find = |m: &str, d: &str, metric| {
        records
            .iter()
            .find(|r| r.model == m && r.database == d && r.metric == metric)
    };
    let mut out = String::from("| Model |");
    for d in &dbs {
        let _ = write!(out, " {d} PLCC | {d} SRCC |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(dbs.len() * 2));
    out.push('\n');
    for m in &models {
        let mut perf = format!("| {m} |");
        let mut gaps = format!("| gain: {m} |");
        for d in &dbs {
            for metric in Metric::BOTH {
                let r = find(m, d, metric);
                let _ = write!(perf, " {} |", fmt_corr(r.map(|r| r.p_test)));
                let _ = write!(gaps, " {} |", fmt_pct(r.and_then(|r| r.gap_percent)));
            }
        }
        let _ = writeln!(out, "{perf}\n{gaps}");
    }
    let means = mean_gap_table(records);
    out.push_str("| Mean gap |");
    for d in &dbs {
        for metric in Metric::BOTH {
            let v = means.get(&(d.to_string(), metric)).copied().flatten();
            let _ = write!(out, " {} |", fmt_pct(v));
        }
    }
    out.push('\n');
    out
}

pub fn gap_table_csv(records: &[GapRecord]) -> String {
    let mut out = String::from("model,database,metric,p_ori,p_test,gap_percent\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model,
            r.database,
            r.metric,
            r.p_ori.map(|v| v.to_string()).unwrap_or_default(),
            r.p_test,
            r.gap_percent.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankDirection {
    HigherBetter,
    LowerBetter,
    /// Largest absolute value ranks first.
    HigherMagnitudeBetter,
    /// Smallest absolute value ranks first.
    LowerMagnitudeBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOutcome {
    /// Dense ranks aligned with the input order.
    pub ranks: Vec<usize>,
    /// Groups of names sharing a rank.
    pub ties: Vec<Vec<String>>,
}

impl RankOutcome {
    pub fn has_ties(&self) -> bool {
        !self.ties.is_empty()
    }
}

/// Dense ranking of `values`; exact ties share the better rank and are
/// reported in `ties`.
pub fn rank_from_metric(
    values: &[(String, Option<f64>)],
    direction: RankDirection,
) -> Result<RankOutcome, AnalysisError> {
    let keyed = values
        .iter()
        .map(|(name, v)| match v {
            Some(x) if x.is_finite() => Ok(match direction {
                RankDirection::HigherBetter => -x,
                RankDirection::LowerBetter => *x,
                RankDirection::HigherMagnitudeBetter => -x.abs(),
                RankDirection::LowerMagnitudeBetter => x.abs(),
            }),
            _ => Err(AnalysisError::UndefinedValue(name.clone())),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let mut distinct = keyed.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let ranks: Vec<usize> = keyed
        .iter()
        .map(|k| distinct.iter().position(|d| d == k).expect("present") + 1)
        .collect();
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, &r) in ranks.iter().enumerate() {
        groups.entry(r).or_default().push(values[i].0.clone());
    }
    let ties = groups.into_values().filter(|g| g.len() > 1).collect();
    Ok(RankOutcome { ranks, ties })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Perspective {
    Q1,
    Q2,
    Q3,
    T,
}

impl Perspective {
    pub const ALL: [Perspective; 4] = [Perspective::Q1, Perspective::Q2, Perspective::Q3, Perspective::T];

    pub fn label(self) -> &'static str {
        match self {
            Perspective::Q1 => "Q1",
            Perspective::Q2 => "Q2",
            Perspective::Q3 => "Q3",
            Perspective::T => "T",
        }
    }

    /// Metric-driven ranking convention of each perspective: Q1 mean gap
    /// (largest magnitude first), Q2 saturated-cell count (fewest first),
    /// Q3 mean of mean gains (highest first), T mean performance (highest
    /// first).
    pub fn direction(self) -> RankDirection {
        match self {
            Perspective::Q1 => RankDirection::HigherMagnitudeBetter,
            Perspective::Q2 => RankDirection::LowerBetter,
            Perspective::Q3 | Perspective::T => RankDirection::HigherBetter,
        }
    }
}

fn check_permutation(ranks: &[usize], n: usize, label: &str) -> Result<(), AnalysisError> {
    if ranks.len() != n {
        return Err(AnalysisError::Length {
            expected: n,
            actual: ranks.len(),
        });
    }
    let mut seen = vec![false; n];
    for &r in ranks {
        if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
            return Err(AnalysisError::NotPermutation {
                perspective: label.to_string(),
                n,
            });
        }
    }
    Ok(())
}

/// Final rank = rank of the mean perspective rank. Ties are broken by the
/// best single-perspective rank, then by name.
pub fn aggregate_ranks(names: &[String], per_perspective: &[Vec<usize>]) -> Result<Vec<usize>, AnalysisError> {
    if per_perspective.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = names.len();
    for (i, r) in per_perspective.iter().enumerate() {
        check_permutation(r, n, &format!("perspective {}", i + 1))?;
    }
    let k = per_perspective.len() as f64;
    let key: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let sum: usize = per_perspective.iter().map(|r| r[i]).sum();
            let best = per_perspective.iter().map(|r| r[i]).min().expect("nonempty");
            (sum as f64 / k, best)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        key[a]
            .0
            .total_cmp(&key[b].0)
            .then(key[a].1.cmp(&key[b].1))
            .then(names[a].cmp(&names[b]))
    });
    let mut final_rank = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        final_rank[i] = pos + 1;
    }
    Ok(final_rank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub databases: Vec<String>,
    pub per_perspective: BTreeMap<Perspective, Vec<usize>>,
    pub final_rank: Vec<usize>,
}

impl RankTable {
    pub fn new(
        databases: Vec<String>,
        per_perspective: BTreeMap<Perspective, Vec<usize>>,
    ) -> Result<Self, AnalysisError> {
        let vectors: Vec<Vec<usize>> = per_perspective.values().cloned().collect();
        for (p, r) in &per_perspective {
            check_permutation(r, databases.len(), p.label())?;
        }
        let final_rank = aggregate_ranks(&databases, &vectors)?;
        Ok(Self {
            databases,
            per_perspective,
            final_rank,
        })
    }

    /// Databases ordered by final rank.
    pub fn ordered(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.databases.len()).collect();
        idx.sort_by_key(|&i| self.final_rank[i]);
        idx.into_iter().map(|i| self.databases[i].as_str()).collect()
    }

    pub fn to_markdown(&self) -> String {
        let persp: Vec<Perspective> = self.per_perspective.keys().copied().collect();
        let mut out = String::from("| Database |");
        for p in &persp {
            let _ = write!(out, " {} |", p.label());
        }
        out.push_str(" Final |\n|---|");
        out.push_str(&"---|".repeat(persp.len() + 1));
        out.push('\n');
        for (i, db) in self.databases.iter().enumerate() {
            let _ = write!(out, "| {db} |");
            for p in &persp {
                let _ = write!(out, " {} |", self.per_perspective[p][i]);
            }
            let _ = writeln!(out, " {} |", self.final_rank[i]);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let persp: Vec<Perspective> = self.per_perspective.keys().copied().collect();
        let mut out = String::from("database");
        for p in &persp {
            let _ = write!(out, ",{}", p.label().to_ascii_lowercase());
        }
        out.push_str(",final\n");
        for (i, db) in self.databases.iter().enumerate() {
            out.push_str(db);
            for p in &persp {
                let _ = write!(out, ",{}", self.per_perspective[p][i]);
            }
            let _ = writeln!(out, ",{}", self.final_rank[i]);
        }
        out
    }
}
