//! Equator-anchored viewport trajectories and batch viewport extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{check_fov, rotate_to_center, sphere_to_erp, tangent_plane, SphericalPoint};
use crate::raster::{sample_bilinear, ErpImage, RasterError, Viewport};
use crate::scalar::Scalar;

pub const DEFAULT_VIEWPORT_SIZE: usize = 224;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory needs at least one viewport")]
    EmptyTrajectory,
    #[error("offset step {step} rad x {count} viewports exceeds one revolution")]
    Overlap { step: f64, count: usize },
    #[error("field of view {0} rad must lie in (0, pi)")]
    FieldOfView(f64),
    #[error("viewport size must be positive")]
    ZeroSize,
    #[error("non-finite trajectory parameter")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMode {
    /// Eight viewports, 45 degrees apart.
    Image8,
    /// Thirty viewports, 12 degrees apart, the input used by video models.
    Video30,
}

impl std::str::FromStr for TrajectoryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "image8" => Ok(Self::Image8),
            "video30" => Ok(Self::Video30),
            other => Err(format!("unknown trajectory mode `{other}` (image8|video30)")),
        }
    }
}

/// Viewing directions along the equator: `start_lon + m·offset_step` for
/// `m = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub start_lon: T,
    pub offset_step: T,
    pub count: usize,
    pub fov: T,
    pub viewport_size: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn custom(
        start_lon: T,
        offset_step: T,
        count: usize,
        fov: T,
        viewport_size: usize,
    ) -> Result<Self, TrajectoryError> {
        let traj = Self {
            start_lon,
            offset_step,
            count,
            fov,
            viewport_size,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !self.start_lon.is_finite() || !self.offset_step.is_finite() || !self.fov.is_finite() {
            return Err(TrajectoryError::NonFinite);
        }
        if self.count == 0 {
            return Err(TrajectoryError::EmptyTrajectory);
        }
        if self.viewport_size == 0 {
            return Err(TrajectoryError::ZeroSize);
        }
        check_fov(self.fov).map_err(|_| TrajectoryError::FieldOfView(self.fov.to_f64_lossy()))?;
        // a single viewport never overlaps itself, whatever the step
        if self.count > 1 {
            let span = self.offset_step.abs() * T::from_usize_lossy(self.count);
            if span > T::TAU() + T::lit(1e-9) {
                return Err(TrajectoryError::Overlap {
                    step: self.offset_step.to_f64_lossy(),
                    count: self.count,
                });
            }
        }
        Ok(())
    }

    /// Center of viewport `m`, longitude wrapped into `[-π, π)`.
    pub fn center(&self, m: usize) -> SphericalPoint<T> {
        SphericalPoint::equator(self.start_lon + T::from_usize_lossy(m) * self.offset_step)
    }

    pub fn centers(&self) -> Vec<SphericalPoint<T>> {
        (0..self.count).map(|m| self.center(m)).collect()
    }

    /// Center longitudes in degrees within `[0, 360)`.
    pub fn center_degrees(&self) -> Vec<f64> {
        self.centers()
            .iter()
            .map(|c| c.lon.to_f64_lossy().to_degrees().rem_euclid(360.0))
            .collect()
    }

    /// Returns a copy whose start longitude is replaced.
    pub fn with_start(mut self, start_lon: T) -> Self {
        self.start_lon = start_lon;
        self
    }
}

/// Preset or custom trajectory parameters.
pub fn make_trajectory<T: Scalar>(mode: TrajectoryMode) -> Trajectory<T> {
    let (step, count) = match mode {
        TrajectoryMode::Image8 => (T::FRAC_PI_4(), 8),
        TrajectoryMode::Video30 => (T::PI() / T::lit(15.0), 30),
    };
    Trajectory {
        start_lon: T::zero(),
        offset_step: step,
        count,
        fov: T::FRAC_PI_3(),
        viewport_size: DEFAULT_VIEWPORT_SIZE,
    }
}

/// Renders one square viewport looking at `center`.
pub fn extract_viewport<T: Scalar>(
    img: &ErpImage,
    center: SphericalPoint<T>,
    fov: T,
    size: usize,
) -> Result<Viewport<T>, RasterError> {
    check_fov(fov).map_err(|_| RasterError::FieldOfView(fov.to_f64_lossy()))?;
    if size >= img.width() || size >= img.height() {
        return Err(RasterError::ViewportTooLarge {
            vp_w: size,
            vp_h: size,
            src_w: img.width(),
            src_h: img.height(),
        });
    }
    let half_extent = (fov * T::lit(0.5)).tan();
    let w = T::from_usize_lossy(img.width());
    let h = T::from_usize_lossy(img.height());
    let mut data = Vec::with_capacity(size * size * 3);
    for j in 0..size {
        let jf = T::from_usize_lossy(j);
        for i in 0..size {
            let (x, y) = tangent_plane(T::from_usize_lossy(i), jf, size, size, half_extent);
            let dir = rotate_to_center(x, y, center);
            let (u, v) = sphere_to_erp(dir, w, h);
            data.extend_from_slice(&sample_bilinear(img, u, v));
        }
    }
    Viewport::new(size, size, data, center, fov)
}

/// Extracts the trajectory's viewports in order `m = 0..count`.
pub fn extract_viewports<T: Scalar>(img: &ErpImage, traj: &Trajectory<T>) -> Result<Vec<Viewport<T>>, RasterError> {
    traj.validate()?;
    (0..traj.count)
        .into_par_iter()
        .map(|m| extract_viewport(img, traj.center(m), traj.fov, traj.viewport_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_3, PI};

    #[test]
    fn image8_preset() {
        let t = make_trajectory::<f64>(TrajectoryMode::Image8);
        assert_eq!((t.count, t.viewport_size), (8, 224));
        assert_eq!(t.fov, FRAC_PI_3);
        for (m, deg) in t.center_degrees().into_iter().enumerate() {
            assert!((deg - 45.0 * m as f64).abs() < 1e-12, "{m}: {deg}");
        }
        assert!(t.centers().iter().all(|c| c.lat == 0.0));
    }

    #[test]
    fn video30_preset_covers_full_turn() {
        let t = make_trajectory::<f64>(TrajectoryMode::Video30);
        assert_eq!(t.count, 30);
        assert!(t.validate().is_ok());
        assert!((t.offset_step * 30.0 - 2.0 * PI).abs() < 1e-12);
        for (m, deg) in t.center_degrees().into_iter().enumerate() {
            assert!((deg - 12.0 * m as f64).abs() < 1e-9, "{m}: {deg}");
        }
    }

    #[test]
    fn custom_single_viewport() {
        let t = Trajectory::custom(0.7, 100.0, 1, FRAC_PI_3, 32).unwrap();
        assert_eq!(t.centers(), vec![SphericalPoint { lon: 0.7, lat: 0.0 }]);
    }

    #[test]
    fn custom_rejects_bad_parameters() {
        assert!(matches!(
            Trajectory::custom(0.0, 1.0, 0, FRAC_PI_3, 32),
            Err(TrajectoryError::EmptyTrajectory)
        ));
        assert!(matches!(
            Trajectory::custom(0.0, PI / 3.0, 7, FRAC_PI_3, 32),
            Err(TrajectoryError::Overlap { .. })
        ));
        assert!(matches!(
            Trajectory::custom(0.0, 0.1, 3, PI, 32),
            Err(TrajectoryError::FieldOfView(_))
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Image8".parse::<TrajectoryMode>().unwrap(), TrajectoryMode::Image8);
        assert_eq!("video30".parse::<TrajectoryMode>().unwrap(), TrajectoryMode::Video30);
        assert!("cube".parse::<TrajectoryMode>().is_err());
    }

    #[test]
    fn constant_panorama_gives_constant_viewports() {
        let img = ErpImage::filled("gray", 512, 256, [90, 90, 90]).unwrap();
        let mut t = make_trajectory::<f64>(TrajectoryMode::Image8);
        t.viewport_size = 64;
        let vps = extract_viewports(&img, &t).unwrap();
        assert_eq!(vps.len(), 8);
        for vp in &vps {
            assert!(vp.data().iter().all(|&x| x == 90.0));
        }
    }

    #[test]
    fn oversized_viewport_rejected() {
        let img = ErpImage::filled("gray", 64, 32, [0, 0, 0]).unwrap();
        let t = Trajectory::custom(0.0, 0.5, 2, FRAC_PI_3, 32).unwrap();
        assert!(matches!(
            extract_viewports(&img, &t),
            Err(RasterError::ViewportTooLarge { .. })
        ));
    }
}
