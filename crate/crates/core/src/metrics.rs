//! Correlation criteria, five-parameter logistic prefitting, dataset
//! splitting and dual-MOS merging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::ridge_with_intercept;
use crate::scalar::Scalar;

pub const MIN_CORRELATION_SAMPLES: usize = 3;
pub const MIN_LOGISTIC_SAMPLES: usize = 5;
pub const MIN_SPLIT_RECORDS: usize = 5;
pub const DEFAULT_TRAIN_RATIO: f64 = 0.8;

const NM_MAX_ITER: usize = 5000;
const NM_REL_TOL: f64 = 1e-10;
const NM_RESTARTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("zero variance in {0}; correlation undefined")]
    ZeroVariance(&'static str),
    #[error("record `{0}` has no second MOS")]
    MissingMos2(String),
    #[error("split ratio {0} outside (0, 1)")]
    Ratio(f64),
}

fn check_pair<T: Scalar>(a: &[T], b: &[T], min: usize) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min {
        return Err(MetricError::TooFew {
            needed: min,
            got: a.len(),
        });
    }
    if let Some(i) = a.iter().chain(b).position(|x| !x.is_finite()) {
        return Err(MetricError::NonFinite(i % a.len()));
    }
    Ok(())
}

/// Pearson correlation without length checks. `None` on zero variance.
fn pearson_unchecked<T: Scalar>(a: &[T], b: &[T]) -> Result<T, MetricError> {
    let n = T::from_usize_lossy(a.len());
    let ma = a.iter().fold(T::zero(), |s, &x| s + x) / n;
    let mb = b.iter().fold(T::zero(), |s, &x| s + x) / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= T::zero() {
        return Err(MetricError::ZeroVariance("predictions"));
    }
    if sbb <= T::zero() {
        return Err(MetricError::ZeroVariance("mos"));
    }
    let r = sab / (saa * sbb).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Raw Pearson linear correlation.
pub fn pearson<T: Scalar>(pred: &[T], mos: &[T]) -> Result<T, MetricError> {
    check_pair(pred, mos, MIN_CORRELATION_SAMPLES)?;
    pearson_unchecked(pred, mos)
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean(start+1..=end)
        let r = T::from_usize_lossy(start + end + 1) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank-order correlation with average-rank ties.
pub fn srcc<T: Scalar>(pred: &[T], mos: &[T]) -> Result<T, MetricError> {
    check_pair(pred, mos, MIN_CORRELATION_SAMPLES)?;
    pearson_unchecked(&average_ranks(pred), &average_ranks(mos))
}

/// `β1·(1/2 − 1/(1 + exp(β2·(x − β3)))) + β4·x + β5`.
pub fn logistic5<T: Scalar>(beta: &[T; 5], x: T) -> T {
    let half = T::lit(0.5);
    beta[0] * (half - T::one() / (T::one() + (beta[1] * (x - beta[2])).exp())) + beta[3] * x + beta[4]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub params: [T; 5],
    pub converged: bool,
    /// Residual sum of squares of the fitted curve.
    pub sse: T,
    /// Residual sum of squares of the best affine fit.
    pub linear_sse: T,
}

fn sigmoid_term(b2: f64, b3: f64, x: f64) -> f64 {
    0.5 - 1.0 / (1.0 + (b2 * (x - b3)).exp())
}

fn sse(beta: &[f64; 5], xs: &[f64], ys: &[f64]) -> f64 {
    let s: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = logistic5(beta, x) - y;
            r * r
        })
        .sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Best `(β1, β4, β5)` for fixed `(β2, β3)`: an exact linear least-squares
/// solve. Falls back to the affine fit when the sigmoid column is degenerate.
fn project(b2: f64, b3: f64, xs: &[f64], ys: &[f64]) -> [f64; 5] {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![sigmoid_term(b2, b3, x), x]).collect();
    if let Some((w, c)) = ridge_with_intercept(&rows, ys, 0.0) {
        let beta = [w[0], b2, b3, w[1], c];
        if beta.iter().all(|v| v.is_finite()) {
            return beta;
        }
    }
    let (slope, icept) = affine_fit(xs, ys);
    [0.0, b2, b3, slope, icept]
}

fn affine_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Nelder–Mead minimization. Stops when the spread of simplex values falls
/// below `NM_REL_TOL` relative to the best value (or `abs_tol`).
fn nelder_mead<const N: usize>(
    f: &dyn Fn(&[f64; N]) -> f64,
    start: [f64; N],
    steps: [f64; N],
    abs_tol: f64,
) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += steps[i];
        simplex.push((p, f(&p)));
    }
    for _ in 0..NM_MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[N].1);
        if worst - best <= NM_REL_TOL * best.abs() + abs_tol {
            break;
        }
        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for k in 0..N {
                centroid[k] += p[k] / N as f64;
            }
        }
        let along = |t: f64| -> [f64; N] { std::array::from_fn(|k| centroid[k] + t * (simplex[N].0[k] - centroid[k])) };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let x = along(-0.5);
                (x, f(&x))
            } else {
                let x = along(0.5);
                (x, f(&x))
            };
            if fc < fr.min(worst) {
                simplex[N] = (xc, fc);
            } else {
                let x0 = simplex[0].0;
                for (p, v) in simplex.iter_mut().skip(1) {
                    *p = std::array::from_fn(|k| x0[k] + 0.5 * (p[k] - x0[k]));
                    *v = f(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Fits the five-parameter logistic by simplex descent with restarts, then
/// solves the linear parameters exactly for the fitted `(β2, β3)`. The fit is
/// reported as not converged when `n < 5` or when its residual exceeds that
/// of the best affine map.
pub fn fit_logistic<T: Scalar>(pred: &[T], mos: &[T]) -> Result<LogisticFit<T>, MetricError> {
    if pred.len() != mos.len() {
        return Err(MetricError::LengthMismatch(pred.len(), mos.len()));
    }
    let xs: Vec<f64> = pred.iter().map(|v| v.to_f64_lossy()).collect();
    let ys: Vec<f64> = mos.iter().map(|v| v.to_f64_lossy()).collect();
    if let Some(i) = xs.iter().chain(&ys).position(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(i % xs.len().max(1)));
    }
    let n = xs.len();
    let (slope, icept) = if n > 0 { affine_fit(&xs, &ys) } else { (0.0, 0.0) };
    let linear = [0.0, 1.0, 0.0, slope, icept];
    let linear_sse = sse(&linear, &xs, &ys);
    let to_t = |b: [f64; 5], s: f64, ls: f64, ok: bool| LogisticFit {
        params: b.map(T::lit),
        converged: ok,
        sse: T::lit(s),
        linear_sse: T::lit(ls),
    };
    if n < MIN_LOGISTIC_SAMPLES {
        return Ok(to_t(linear, linear_sse, linear_sse, false));
    }

    // standardized abscissa: x' = (x − m)/s
    let m = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64).sqrt();
    let s = if sd > 0.0 { sd } else { 1.0 };
    let zs: Vec<f64> = xs.iter().map(|x| (x - m) / s).collect();

    let ymax = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let ymean = ys.iter().sum::<f64>() / n as f64;
    let yss: f64 = ys.iter().map(|y| y * y).sum();
    let abs_tol = 1e-24 * yss.max(1e-300);
    let yspan = (ymax - ymin).max(1e-12);

    let objective = |b: &[f64; 5]| sse(b, &zs, &ys);
    let mut best = [ymax - ymin, 1.0, 0.0, 0.0, ymean];
    let mut best_val = objective(&best);
    for _ in 0..NM_RESTARTS {
        let steps = [0.5 * yspan, 0.5, 0.5, 0.1 * yspan, 0.1 * yspan];
        let (p, v) = nelder_mead(&objective, best, steps, abs_tol);
        let improved = v < best_val * (1.0 - 1e-12);
        if v <= best_val {
            best = p;
            best_val = v;
        }
        if !improved {
            break;
        }
    }

    // variable projection over (β2, β3)
    let projected = |q: &[f64; 2]| {
        let b = project(q[0], q[1], &zs, &ys);
        sse(&b, &zs, &ys)
    };
    let (q, _) = nelder_mead(&projected, [best[1], best[2]], [0.25, 0.25], abs_tol);
    let mut cands = [project(q[0], q[1], &zs, &ys), project(best[1], best[2], &zs, &ys), best];
    cands.sort_by(|a, b| objective(a).total_cmp(&objective(b)));
    let z = cands[0];

    // back to the original abscissa
    let beta = [z[0], z[1] / s, m + s * z[2], z[3] / s, z[4] - z[3] * m / s];
    let fit_sse = sse(&beta, &xs, &ys);
    let converged = fit_sse.is_finite() && fit_sse <= linear_sse * (1.0 + 1e-9) + abs_tol;
    Ok(to_t(beta, fit_sse, linear_sse, converged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlccResult<T> {
    pub plcc: T,
    pub raw_pearson: T,
    pub fit: Option<LogisticFit<T>>,
    /// The fitted curve decreases over the prediction range.
    pub negative_slope: bool,
}

/// PLCC after optional logistic prefitting. A fit that does not converge
/// falls back to the raw Pearson value.
pub fn plcc<T: Scalar>(pred: &[T], mos: &[T], prefit: bool) -> Result<PlccResult<T>, MetricError> {
    check_pair(pred, mos, MIN_CORRELATION_SAMPLES)?;
    let raw = pearson_unchecked(pred, mos)?;
    if !prefit {
        return Ok(PlccResult {
            plcc: raw,
            raw_pearson: raw,
            fit: None,
            negative_slope: raw < T::zero(),
        });
    }
    let fit = fit_logistic(pred, mos)?;
    if !fit.converged {
        return Ok(PlccResult {
            plcc: raw,
            raw_pearson: raw,
            fit: Some(fit),
            negative_slope: raw < T::zero(),
        });
    }
    let mapped: Vec<T> = pred.iter().map(|&x| logistic5(&fit.params, x)).collect();
    let value = pearson_unchecked(&mapped, mos)?;
    let lo = pred.iter().copied().fold(T::infinity(), T::min);
    let hi = pred.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(PlccResult {
        plcc: value,
        raw_pearson: raw,
        fit: Some(fit),
        negative_slope: logistic5(&fit.params, hi) < logistic5(&fit.params, lo),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub plcc: T,
    pub srcc: T,
    pub n: usize,
    pub logistic_params: [T; 5],
    pub fit_converged: bool,
    pub raw_pearson: T,
    pub prefit: bool,
    pub negative_slope: bool,
    pub diagnostics: Vec<String>,
}

impl<T: Scalar> EvalReport<T> {
    /// Both correlations are defined.
    pub fn is_defined(&self) -> bool {
        self.plcc.is_finite() && self.srcc.is_finite()
    }
}

/// Computes PLCC and SRCC. Undefined correlations (constant inputs) are
/// stored as NaN with a diagnostic instead of failing.
pub fn evaluate<T: Scalar>(pred: &[T], mos: &[T], prefit: bool) -> Result<EvalReport<T>, MetricError> {
    check_pair(pred, mos, MIN_CORRELATION_SAMPLES)?;
    let mut diagnostics = Vec::new();
    let srcc_value = match srcc(pred, mos) {
        Ok(v) => v,
        Err(e @ MetricError::ZeroVariance(_)) => {
            diagnostics.push(format!("srcc undefined: {e}"));
            T::nan()
        }
        Err(e) => return Err(e),
    };
    let mut report = EvalReport {
        plcc: T::nan(),
        srcc: srcc_value,
        n: pred.len(),
        logistic_params: [T::nan(); 5],
        fit_converged: false,
        raw_pearson: T::nan(),
        prefit,
        negative_slope: false,
        diagnostics,
    };
    match plcc(pred, mos, prefit) {
        Ok(p) => {
            report.plcc = p.plcc;
            report.raw_pearson = p.raw_pearson;
            report.negative_slope = p.negative_slope;
            if let Some(fit) = p.fit {
                report.logistic_params = fit.params;
                report.fit_converged = fit.converged;
                if !fit.converged {
                    report
                        .diagnostics
                        .push("logistic fit did not converge; plcc is the raw Pearson value".into());
                }
            }
            if p.negative_slope {
                report
                    .diagnostics
                    .push("negative slope: predictions are anti-correlated with mos".into());
            }
        }
        Err(e @ MetricError::ZeroVariance(_)) => report.diagnostics.push(format!("plcc undefined: {e}")),
        Err(e) => return Err(e),
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord<T> {
    pub image_id: String,
    pub predicted: T,
    pub mos: T,
    pub mos2: Option<T>,
    pub split: Split,
    pub database: String,
    pub distortion_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Replaces `mos` by the mean of both ratings and clears `mos2`.
pub fn merge_dual_mos<T: Scalar>(mut record: QualityRecord<T>) -> Result<QualityRecord<T>, MetricError> {
    let mos2 = record
        .mos2
        .take()
        .ok_or_else(|| MetricError::MissingMos2(record.image_id.clone()))?;
    let first = record.mos;
    record.mos = (first + mos2) / T::lit(2.0);
    record
        .notes
        .push(format!("mos averaged from dual ratings ({first}, {mos2})"));
    Ok(record)
}

fn train_count(n: usize, ratio: f64) -> Result<usize, MetricError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(MetricError::Ratio(ratio));
    }
    Ok(((n as f64) * ratio).round() as usize)
}

/// Seeded uniform partition: exactly `round(ratio·n)` items are `Train`.
pub fn split_labels(n: usize, ratio: f64, seed: u64) -> Result<Vec<Split>, MetricError> {
    if n < MIN_SPLIT_RECORDS {
        return Err(MetricError::TooFew {
            needed: MIN_SPLIT_RECORDS,
            got: n,
        });
    }
    let k = train_count(n, ratio)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![Split::Test; n];
    for &i in &order[..k] {
        labels[i] = Split::Train;
    }
    Ok(labels)
}

/// Content-level partition: items sharing a group key land on the same side.
/// `round(ratio·groups)` groups go to training.
pub fn split_labels_grouped<S: AsRef<str>>(groups: &[S], ratio: f64, seed: u64) -> Result<Vec<Split>, MetricError> {
    if groups.len() < MIN_SPLIT_RECORDS {
        return Err(MetricError::TooFew {
            needed: MIN_SPLIT_RECORDS,
            got: groups.len(),
        });
    }
    let mut keys: Vec<&str> = groups.iter().map(AsRef::as_ref).collect();
    keys.sort_unstable();
    keys.dedup();
    let k = train_count(keys.len(), ratio)?;
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train: std::collections::HashSet<&str> = keys[..k].iter().copied().collect();
    Ok(groups
        .iter()
        .map(|g| {
            if train.contains(g.as_ref()) {
                Split::Train
            } else {
                Split::Test
            }
        })
        .collect())
}

pub fn split_dataset<T>(
    mut records: Vec<QualityRecord<T>>,
    ratio: f64,
    seed: u64,
) -> Result<Vec<QualityRecord<T>>, MetricError> {
    let labels = split_labels(records.len(), ratio, seed)?;
    for (r, s) in records.iter_mut().zip(labels) {
        r.split = s;
    }
    Ok(records)
}
