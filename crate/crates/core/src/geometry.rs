//! Spherical coordinates, the equirectangular pixel mapping and the
//! rectilinear (gnomonic) viewport ray mapping.
//!
//! World frame: `+y` is up, `+z` is the forward direction (longitude 0,
//! the horizontal center of the equirectangular raster) and `+x` points to
//! longitude `+π/2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pixel coordinate ({u}, {v}) outside [0, {w}] x [0, {h}]")]
    PixelOutOfRange { u: f64, v: f64, w: f64, h: f64 },
    #[error("field of view {0} rad must lie in (0, pi)")]
    FieldOfView(f64),
    #[error("non-finite spherical coordinate ({lon}, {lat})")]
    NonFinite { lon: f64, lat: f64 },
}

/// A direction on the unit sphere, longitude in `[-π, π)` and latitude in
/// `[-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint<T> {
    pub lon: T,
    pub lat: T,
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_longitude<T: Scalar>(lon: T) -> T {
    let two_pi = T::TAU();
    let pi = T::PI();
    let mut wrapped = lon - two_pi * ((lon + pi) / two_pi).floor();
    // floor() can land exactly on the open end after rounding
    if wrapped >= pi {
        wrapped -= two_pi;
    }
    if wrapped < -pi {
        wrapped = -pi;
    }
    wrapped
}

impl<T: Scalar> SphericalPoint<T> {
    /// Builds a normalized point: longitude is wrapped, latitude clamped.
    pub fn new(lon: T, lat: T) -> Result<Self, GeometryError> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(GeometryError::NonFinite {
                lon: lon.to_f64_lossy(),
                lat: lat.to_f64_lossy(),
            });
        }
        let half_pi = T::FRAC_PI_2();
        Ok(Self {
            lon: wrap_longitude(lon),
            lat: lat.max(-half_pi).min(half_pi),
        })
    }

    /// Point on the equator.
    pub fn equator(lon: T) -> Self {
        Self {
            lon: wrap_longitude(lon),
            lat: T::zero(),
        }
    }

    /// Unit direction vector `[x, y, z]`.
    pub fn to_unit_vector(self) -> [T; 3] {
        let (sin_lon, cos_lon) = self.lon.sin_cos();
        let (sin_lat, cos_lat) = self.lat.sin_cos();
        [cos_lat * sin_lon, sin_lat, cos_lat * cos_lon]
    }

    /// Inverse of [`to_unit_vector`](Self::to_unit_vector). The input need
    /// not be normalized but must be nonzero.
    pub fn from_vector(v: [T; 3]) -> Self {
        let [x, y, z] = v;
        let horizontal = x.hypot(z);
        let lat = y.atan2(horizontal);
        let lon = if horizontal == T::zero() { T::zero() } else { x.atan2(z) };
        Self {
            lon: wrap_longitude(lon),
            lat,
        }
    }

    /// Great-circle distance in radians.
    pub fn angular_distance(self, other: Self) -> T {
        let a = self.to_unit_vector();
        let b = other.to_unit_vector();
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let cross_norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        cross_norm.atan2(dot)
    }
}

/// Maps a fractional equirectangular pixel position to a spherical point.
///
/// `lon = (u/w - 0.5)·2π`, `lat = (0.5 - v/h)·π`. The right edge `u = w`
/// wraps to `lon = -π`.
pub fn erp_to_sphere<T: Scalar>(u: T, v: T, w: T, h: T) -> Result<SphericalPoint<T>, GeometryError> {
    let in_range = u >= T::zero() && u <= w && v >= T::zero() && v <= h;
    if !in_range || !(w > T::zero()) || !(h > T::zero()) {
        return Err(GeometryError::PixelOutOfRange {
            u: u.to_f64_lossy(),
            v: v.to_f64_lossy(),
            w: w.to_f64_lossy(),
            h: h.to_f64_lossy(),
        });
    }
    let half = T::lit(0.5);
    let lon = (u / w - half) * T::TAU();
    let lat = (half - v / h) * T::PI();
    Ok(SphericalPoint {
        lon: wrap_longitude(lon),
        lat,
    })
}

/// Inverse of [`erp_to_sphere`]; returns `(u, v)`.
pub fn sphere_to_erp<T: Scalar>(p: SphericalPoint<T>, w: T, h: T) -> (T, T) {
    let half = T::lit(0.5);
    let u = (p.lon / T::TAU() + half) * w;
    let v = (half - p.lat / T::PI()) * h;
    (u, v)
}

/// Direction of the ray through viewport pixel `(i, j)` (column, row; pixel
/// centers at `index + 0.5`) for a rectilinear viewport looking at `center`.
///
/// The tangent-plane direction `(x, y, 1)` is tilted by the center latitude
/// about the camera x-axis and then turned by the center longitude about the
/// world vertical. Roll is always zero.
pub fn viewport_ray<T: Scalar>(
    i: T,
    j: T,
    vp_w: usize,
    vp_h: usize,
    fov: T,
    center: SphericalPoint<T>,
) -> Result<SphericalPoint<T>, GeometryError> {
    check_fov(fov)?;
    let half_extent = (fov * T::lit(0.5)).tan();
    let (x, y) = tangent_plane(i, j, vp_w, vp_h, half_extent);
    Ok(rotate_to_center(x, y, center))
}

pub(crate) fn check_fov<T: Scalar>(fov: T) -> Result<(), GeometryError> {
    if fov > T::zero() && fov < T::PI() {
        Ok(())
    } else {
        Err(GeometryError::FieldOfView(fov.to_f64_lossy()))
    }
}

#[inline]
pub(crate) fn tangent_plane<T: Scalar>(i: T, j: T, vp_w: usize, vp_h: usize, half_extent: T) -> (T, T) {
    let one = T::one();
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let x = (two * (i + half) / T::from_usize_lossy(vp_w) - one) * half_extent;
    let y = (one - two * (j + half) / T::from_usize_lossy(vp_h)) * half_extent;
    (x, y)
}

#[inline]
pub(crate) fn rotate_to_center<T: Scalar>(x: T, y: T, center: SphericalPoint<T>) -> SphericalPoint<T> {
    let norm = (x * x + y * y + T::one()).sqrt();
    let (dx, dy, dz) = (x / norm, y / norm, T::one() / norm);

    let (sin_lat, cos_lat) = center.lat.sin_cos();
    let ty = dy * cos_lat + dz * sin_lat;
    let tz = -dy * sin_lat + dz * cos_lat;

    let (sin_lon, cos_lon) = center.lon.sin_cos();
    let wx = dx * cos_lon + tz * sin_lon;
    let wz = -dx * sin_lon + tz * cos_lon;
    SphericalPoint::from_vector([wx, ty, wz])
}
