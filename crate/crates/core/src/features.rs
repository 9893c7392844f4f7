//! Handcrafted per-viewport quality features.
//!
//! Five entries, in order: mean luminance, luminance standard deviation,
//! Laplacian variance, mean gradient magnitude, high-frequency energy ratio.
//! Luminance is `0.299 R + 0.587 G + 0.114 B`. The Laplacian uses the
//! 4-neighbour kernel `[0 1 0; 1 -4 1; 0 1 0]` and, like the central
//! difference gradient, is evaluated on interior pixels only.

use serde::{Deserialize, Serialize};

use crate::raster::Viewport;
use crate::scalar::{mean, variance, Scalar};

pub const FEATURE_DIM: usize = 5;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "mean_luminance",
    "luminance_std",
    "laplacian_variance",
    "mean_gradient",
    "high_frequency_ratio",
];

/// Names of the composite map, see [`composite_features`].
pub const COMPOSITE_NAMES: [&str; FEATURE_DIM] = [
    "log_laplacian_variance",
    "log_mean_gradient",
    "log_laplacian_mad",
    "log_luminance_std",
    "high_frequency_ratio",
];

/// Peak squared gain of the 4-neighbour Laplacian (reached at the
/// checkerboard frequency); dividing by it keeps the energy ratio in `[0, 1]`.
const LAPLACIAN_PEAK_GAIN_SQ: f64 = 64.0;

/// Fixed-dimension feature vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    /// Returns `None` if any entry is non-finite or the vector is empty.
    pub fn new(values: Vec<T>) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn laplacian_variance(&self) -> T {
        self.values[2]
    }

    /// Element-wise mean of equally sized vectors.
    pub fn mean_of(xs: &[FeatureVector<T>]) -> Option<Self> {
        let first = xs.first()?;
        let d = first.dim();
        if xs.iter().any(|x| x.dim() != d) {
            return None;
        }
        let n = T::from_usize_lossy(xs.len());
        let values = (0..d)
            .map(|k| xs.iter().fold(T::zero(), |acc, x| acc + x.values[k]) / n)
            .collect();
        Some(Self { values })
    }
}

/// Luminance plane of a viewport.
pub fn luminance<T: Scalar>(vp: &Viewport<T>) -> Vec<T> {
    // integer weights keep gray pixels exact
    let (r, g, b, scale) = (T::lit(299.0), T::lit(587.0), T::lit(114.0), T::lit(1000.0));
    vp.data()
        .chunks_exact(3)
        .map(|px| (r * px[0] + g * px[1] + b * px[2]) / scale)
        .collect()
}

/// 4-neighbour Laplacian over interior pixels, row-major, `(w-2)·(h-2)`
/// entries. Empty when either side is shorter than 3.
pub fn laplacian<T: Scalar>(plane: &[T], w: usize, h: usize) -> Vec<T> {
    if w < 3 || h < 3 {
        return Vec::new();
    }
    let four = T::lit(4.0);
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = plane[y * w + x];
            let sum = plane[(y - 1) * w + x] + plane[(y + 1) * w + x] + plane[y * w + x - 1] + plane[y * w + x + 1];
            out.push(sum - four * c);
        }
    }
    out
}

fn mean_gradient<T: Scalar>(plane: &[T], w: usize, h: usize) -> T {
    if w < 3 || h < 3 {
        return T::zero();
    }
    let half = T::lit(0.5);
    let mut total = T::zero();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (plane[y * w + x + 1] - plane[y * w + x - 1]) * half;
            let gy = (plane[(y + 1) * w + x] - plane[(y - 1) * w + x]) * half;
            total += gx.hypot(gy);
        }
    }
    total / T::from_usize_lossy((w - 2) * (h - 2))
}

pub fn extract_features<T: Scalar>(vp: &Viewport<T>) -> FeatureVector<T> {
    let (w, h) = (vp.width(), vp.height());
    let lum = luminance(vp);
    let mu = mean(&lum).unwrap_or_else(T::zero);
    let var = variance(&lum).unwrap_or_else(T::zero);

    let lap = laplacian(&lum, w, h);
    let lap_var = variance(&lap).unwrap_or_else(T::zero);
    let gradient = mean_gradient(&lum, w, h);

    let ratio = if var > T::zero() && !lap.is_empty() {
        let lap_energy = lap.iter().fold(T::zero(), |acc, &l| acc + l * l) / T::from_usize_lossy(lap.len());
        (lap_energy / (T::lit(LAPLACIAN_PEAK_GAIN_SQ) * var)).min(T::one())
    } else {
        T::zero()
    };

    FeatureVector {
        values: vec![mu, var.sqrt(), lap_var, gradient, ratio],
    }
}

/// Median absolute deviation of the viewport's Laplacian response. Flat
/// regions dominate the median, so edges barely move it while additive noise
/// raises it in proportion to the noise level.
pub fn laplacian_mad<T: Scalar>(vp: &Viewport<T>) -> T {
    let lap = laplacian(&luminance(vp), vp.width(), vp.height());
    if lap.is_empty() {
        return T::zero();
    }
    let med = median(lap.clone());
    median(lap.into_iter().map(|l| (l - med).abs()).collect())
}

pub(crate) fn median<T: Scalar>(mut xs: Vec<T>) -> T {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) * T::lit(0.5)
    }
}

/// Log-compressed energy features plus the robust Laplacian spread:
/// `[ln(1+lapvar), ln(1+gradient), ln(1+lap_mad), ln(1+lum_std), hf_ratio]`.
///
/// Blur lowers the first two while leaving the MAD near its floor; noise
/// raises all three, the MAD fastest. A linear map over these can therefore
/// penalize both directions, which it cannot do over the raw energies.
pub fn composite_features<T: Scalar>(vp: &Viewport<T>) -> FeatureVector<T> {
    let base = extract_features(vp);
    let v = base.values();
    FeatureVector {
        values: vec![
            v[2].ln_1p(),
            v[3].ln_1p(),
            laplacian_mad(vp).ln_1p(),
            v[1].ln_1p(),
            v[4],
        ],
    }
}

/// Which per-viewport feature recipe a scorer consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMap {
    #[default]
    Handcrafted,
    Composite,
}

impl FeatureMap {
    pub fn names(self) -> &'static [&'static str; FEATURE_DIM] {
        match self {
            FeatureMap::Handcrafted => &FEATURE_NAMES,
            FeatureMap::Composite => &COMPOSITE_NAMES,
        }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Option<Self> {
        [FeatureMap::Handcrafted, FeatureMap::Composite]
            .into_iter()
            .find(|m| names.len() == FEATURE_DIM && m.names().iter().zip(names).all(|(a, b)| *a == b.as_ref()))
    }

    pub fn extract<T: Scalar>(self, vp: &Viewport<T>) -> FeatureVector<T> {
        match self {
            FeatureMap::Handcrafted => extract_features(vp),
            FeatureMap::Composite => composite_features(vp),
        }
    }
}
