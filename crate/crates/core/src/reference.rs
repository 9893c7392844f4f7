//! Fixed (untrained) reference scorers: two no-reference proxies and two
//! full-reference PSNR variants.

use serde::{Deserialize, Serialize};

use crate::features::{extract_features, laplacian_mad};
use crate::raster::{ErpImage, RasterError, Viewport};
use crate::scalar::{mean, Scalar};
use crate::scorer::{pool_scores, ScoringError};
use crate::viewport::{extract_viewports, Trajectory};

/// Cap applied wherever a PSNR is reported or used as a score.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedScorer {
    /// `log(1 + Laplacian variance)`, mean-pooled over viewports.
    Sharpness,
    /// Negated median absolute deviation of the Laplacian response,
    /// mean-pooled over viewports.
    NoiseMad,
    /// Full-reference PSNR per viewport, mean-pooled.
    VpPsnr,
    /// Full-reference latitude-weighted PSNR on the ERP grid.
    WsPsnr,
}

impl FixedScorer {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sharpness => "SHARPNESS",
            Self::NoiseMad => "NOISE-MAD",
            Self::VpPsnr => "VP-PSNR",
            Self::WsPsnr => "WS-PSNR",
        }
    }

    pub fn requires_reference(self) -> bool {
        matches!(self, Self::VpPsnr | Self::WsPsnr)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        fixed_scorers()
            .iter()
            .copied()
            .find(|s| s.name().eq_ignore_ascii_case(name))
    }

    /// Scores `img`. PSNR values are capped at 100 dB.
    pub fn score<T: Scalar>(
        self,
        img: &ErpImage,
        reference: Option<&ErpImage>,
        traj: &Trajectory<T>,
    ) -> Result<T, ScoringError> {
        match self {
            Self::Sharpness => {
                let vps = extract_viewports(img, traj)?;
                let s: Vec<T> = vps.iter().map(sharpness).collect();
                pool_scores(&s)
            }
            Self::NoiseMad => {
                let vps = extract_viewports(img, traj)?;
                let s: Vec<T> = vps.iter().map(|vp| -laplacian_mad(vp)).collect();
                pool_scores(&s)
            }
            Self::VpPsnr => {
                let r = reference.ok_or(ScoringError::MissingReference(self.name()))?;
                Ok(vp_psnr(img, r, traj)?)
            }
            Self::WsPsnr => {
                let r = reference.ok_or(ScoringError::MissingReference(self.name()))?;
                let v = ws_psnr(img, r)?;
                Ok(T::lit(v.min(PSNR_CAP_DB)))
            }
        }
    }
}

/// The catalog of fixed scorers, in report order.
pub fn fixed_scorers() -> &'static [FixedScorer] {
    &[
        FixedScorer::Sharpness,
        FixedScorer::NoiseMad,
        FixedScorer::VpPsnr,
        FixedScorer::WsPsnr,
    ]
}

pub fn sharpness<T: Scalar>(vp: &Viewport<T>) -> T {
    extract_features(vp).laplacian_variance().ln_1p()
}

/// PSNR between two equally sized viewports, capped at 100 dB.
pub fn viewport_psnr<T: Scalar>(a: &Viewport<T>, b: &Viewport<T>) -> Result<T, ScoringError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(ScoringError::Shape(format!(
            "viewport {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let se: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .collect();
    let mse = mean(&se).ok_or(ScoringError::NoViewports)?;
    Ok(psnr_from_mse(mse))
}

fn psnr_from_mse<T: Scalar>(mse: T) -> T {
    let cap = T::lit(PSNR_CAP_DB);
    if mse <= T::zero() {
        return cap;
    }
    (T::lit(10.0) * (T::lit(255.0 * 255.0) / mse).log10()).min(cap)
}

pub fn vp_psnr<T: Scalar>(img: &ErpImage, reference: &ErpImage, traj: &Trajectory<T>) -> Result<T, ScoringError> {
    let a = extract_viewports(img, traj)?;
    let b = extract_viewports(reference, traj)?;
    let per_vp = a
        .iter()
        .zip(&b)
        .map(|(x, y)| viewport_psnr(x, y))
        .collect::<Result<Vec<T>, _>>()?;
    pool_scores(&per_vp)
}

/// Row weight `cos((j + 0.5 - H/2)·π/H)` of the ERP grid.
pub fn ws_weight(j: usize, h: usize) -> f64 {
    ((j as f64 + 0.5 - h as f64 / 2.0) * std::f64::consts::PI / h as f64).cos()
}

/// Latitude-weighted PSNR over the whole ERP image. Identical images give
/// `f64::INFINITY`.
pub fn ws_psnr(img: &ErpImage, reference: &ErpImage) -> Result<f64, RasterError> {
    let (w, h) = (img.width(), img.height());
    if reference.width() != w || reference.height() != h {
        return Err(RasterError::DataLength {
            expected: w * h * 3,
            actual: reference.data().len(),
        });
    }
    let (a, b) = (img.data(), reference.data());
    let mut num = 0.0;
    let mut weight_sum = 0.0;
    for j in 0..h {
        let wj = ws_weight(j, h);
        weight_sum += wj;
        let row = &a[j * w * 3..(j + 1) * w * 3];
        let ref_row = &b[j * w * 3..(j + 1) * w * 3];
        let se: f64 = row
            .iter()
            .zip(ref_row)
            .map(|(&x, &y)| {
                let d = f64::from(x) - f64::from(y);
                d * d
            })
            .sum();
        num += wj * se;
    }
    let mse = num / (3.0 * w as f64 * weight_sum);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewport::{make_trajectory, TrajectoryMode};

    #[test]
    fn ws_psnr_identity_is_infinite() {
        let img = ErpImage::filled("a", 8, 4, [10, 20, 30]).unwrap();
        assert_eq!(ws_psnr(&img, &img).unwrap(), f64::INFINITY);
        let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
        let big = ErpImage::filled("a", 512, 256, [10, 20, 30]).unwrap();
        let s = FixedScorer::WsPsnr.score(&big, Some(&big), &traj).unwrap();
        assert_eq!(s, PSNR_CAP_DB);
    }

    #[test]
    fn ws_weights_are_symmetric_and_positive() {
        for h in [2, 3, 8, 512] {
            for j in 0..h {
                let w = ws_weight(j, h);
                assert!(w > 0.0 && w <= 1.0);
                assert!((w - ws_weight(h - 1 - j, h)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_required() {
        let img = ErpImage::filled("a", 512, 256, [1, 2, 3]).unwrap();
        let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
        assert!(matches!(
            FixedScorer::VpPsnr.score(&img, None, &traj),
            Err(ScoringError::MissingReference("VP-PSNR"))
        ));
        assert!(FixedScorer::Sharpness.score(&img, None, &traj).is_ok());
    }

    #[test]
    fn catalog_names_roundtrip() {
        for &s in fixed_scorers() {
            assert_eq!(FixedScorer::from_name(s.name()), Some(s));
        }
        assert_eq!(fixed_scorers().len(), 4);
    }

    #[test]
    fn constant_viewport_scores() {
        let vp = Viewport::<f64>::filled(16, 16, 90.0).unwrap();
        assert_eq!(sharpness(&vp), 0.0);
        assert_eq!(laplacian_mad(&vp), 0.0);
        assert_eq!(viewport_psnr(&vp, &vp).unwrap(), PSNR_CAP_DB);
    }
}
