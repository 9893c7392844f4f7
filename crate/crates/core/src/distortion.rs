//! Synthetic degradations: Gaussian blur (GB), Gaussian noise (GN),
//! brightness discontinuity (BD) and stitching seams (ST), applied either to
//! the whole panorama or inside one of six lens caps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{erp_to_sphere, SphericalPoint};
use crate::raster::ErpImage;

/// Per-level parameter ladders, index `level - 1`.
pub const BLUR_SIGMAS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const NOISE_SIGMAS: [f64; 5] = [5.0, 10.0, 20.0, 35.0, 50.0];
pub const BRIGHTNESS_DELTAS: [f64; 5] = [10.0, 20.0, 40.0, 60.0, 80.0];
pub const STITCH_SHIFTS: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];
pub const MAX_LEVEL: u8 = 5;

pub const DEFAULT_CAP_RADIUS_DEG: f64 = 50.0;
pub const CAP_RAMP_DEG: f64 = 5.0;
pub const LENS_COUNT: usize = 6;
const SEAM_BLEND_PX: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistortionError {
    #[error("sigma must be finite and non-negative, got {0}")]
    Sigma(f64),
    #[error("brightness delta {0} outside [-128, 128]")]
    Delta(f64),
    #[error("level {0} outside 1..=5")]
    Level(u8),
    #[error("lens index {0} must be below 6")]
    Lens(usize),
    #[error("cap radius {0} rad must lie in (0, pi]")]
    CapRadius(f64),
    #[error("stitch parameters must be finite")]
    Stitch,
    #[error("unknown distortion type `{0}`")]
    UnknownType(String),
}

/// Short distortion tags as used in manifests and directory names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionType {
    Gb,
    Gn,
    Bd,
    St,
}

impl DistortionType {
    pub const ALL: [DistortionType; 4] = [Self::Gb, Self::Gn, Self::Bd, Self::St];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Gb => "gb",
            Self::Gn => "gn",
            Self::Bd => "bd",
            Self::St => "st",
        }
    }
}

impl std::fmt::Display for DistortionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for DistortionType {
    type Err = DistortionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gb" | "blur" => Ok(Self::Gb),
            "gn" | "noise" => Ok(Self::Gn),
            "bd" | "brightness" => Ok(Self::Bd),
            "st" | "stitch" => Ok(Self::St),
            other => Err(DistortionError::UnknownType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistortionKind {
    GaussianBlur { sigma: f64 },
    GaussianNoise { sigma: f64 },
    BrightnessShift { delta: f64 },
    StitchSeam { shift: f64, seam_lon: f64 },
}

impl DistortionKind {
    pub fn distortion_type(&self) -> DistortionType {
        match self {
            Self::GaussianBlur { .. } => DistortionType::Gb,
            Self::GaussianNoise { .. } => DistortionType::Gn,
            Self::BrightnessShift { .. } => DistortionType::Bd,
            Self::StitchSeam { .. } => DistortionType::St,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum Scope {
    Homogeneous,
    /// Restricted to the cap of `cap_radius` (radians) around lens axis
    /// `lens_index`: `+x, -x, +y, -y, +z, -z`.
    Heterogeneous {
        lens_index: usize,
        cap_radius: f64,
    },
}

impl Scope {
    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Scope::Homogeneous)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Scope::Homogeneous => "homogeneous",
            Scope::Heterogeneous { .. } => "heterogeneous",
        }
    }
}

/// Lens axis directions in the world frame (`+y` up, `+z` forward).
pub fn lens_direction(lens_index: usize) -> Option<SphericalPoint<f64>> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let (lon, lat) = match lens_index {
        0 => (FRAC_PI_2, 0.0),
        1 => (-FRAC_PI_2, 0.0),
        2 => (0.0, FRAC_PI_2),
        3 => (0.0, -FRAC_PI_2),
        4 => (0.0, 0.0),
        5 => (-PI, 0.0),
        _ => return None,
    };
    Some(SphericalPoint { lon, lat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub scope: Scope,
    pub level: u8,
}

impl DistortionSpec {
    /// Looks up the parameter ladder for `level`. `seam_lon` is only used for
    /// stitching.
    pub fn from_level(ty: DistortionType, level: u8, scope: Scope, seam_lon: f64) -> Result<Self, DistortionError> {
        if !(1..=MAX_LEVEL).contains(&level) {
            return Err(DistortionError::Level(level));
        }
        let i = usize::from(level - 1);
        let kind = match ty {
            DistortionType::Gb => DistortionKind::GaussianBlur { sigma: BLUR_SIGMAS[i] },
            DistortionType::Gn => DistortionKind::GaussianNoise { sigma: NOISE_SIGMAS[i] },
            DistortionType::Bd => DistortionKind::BrightnessShift {
                delta: BRIGHTNESS_DELTAS[i],
            },
            DistortionType::St => DistortionKind::StitchSeam {
                shift: STITCH_SHIFTS[i],
                seam_lon,
            },
        };
        let spec = Self { kind, scope, level };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DistortionError> {
        if !(1..=MAX_LEVEL).contains(&self.level) {
            return Err(DistortionError::Level(self.level));
        }
        match self.kind {
            DistortionKind::GaussianBlur { sigma } | DistortionKind::GaussianNoise { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(DistortionError::Sigma(sigma));
                }
            }
            DistortionKind::BrightnessShift { delta } => {
                if !(delta.abs() <= 128.0) {
                    return Err(DistortionError::Delta(delta));
                }
            }
            DistortionKind::StitchSeam { shift, seam_lon } => {
                if !shift.is_finite() || !seam_lon.is_finite() {
                    return Err(DistortionError::Stitch);
                }
            }
        }
        if let Scope::Heterogeneous { lens_index, cap_radius } = self.scope {
            if lens_index >= LENS_COUNT {
                return Err(DistortionError::Lens(lens_index));
            }
            if !(cap_radius > 0.0 && cap_radius <= std::f64::consts::PI) {
                return Err(DistortionError::CapRadius(cap_radius));
            }
        }
        Ok(())
    }
}

/// Applies `spec` to `img`. Pixels whose cap weight is zero are copied
/// unchanged, so heterogeneous effects leave everything outside the cap and
/// its 5° ramp bit-identical.
pub fn apply_distortion(img: &ErpImage, spec: &DistortionSpec, seed: u64) -> Result<ErpImage, DistortionError> {
    spec.validate()?;
    let (w, h) = (img.width(), img.height());
    let src = img.data();

    let effect: Vec<f64> = match spec.kind {
        DistortionKind::GaussianBlur { sigma } => {
            if sigma == 0.0 {
                return Ok(img.clone());
            }
            let plane: Vec<f64> = src.iter().map(|&x| f64::from(x)).collect();
            gaussian_blur_rgb(&plane, w, h, sigma)
        }
        DistortionKind::GaussianNoise { sigma } => {
            if sigma == 0.0 {
                return Ok(img.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma).map_err(|_| DistortionError::Sigma(sigma))?;
            src.iter().map(|&x| f64::from(x) + normal.sample(&mut rng)).collect()
        }
        DistortionKind::BrightnessShift { delta } => src.iter().map(|&x| f64::from(x) + delta).collect(),
        DistortionKind::StitchSeam { shift, seam_lon } => stitch_seam(img, shift, seam_lon),
    };

    let data = match spec.scope {
        Scope::Homogeneous => effect.iter().map(|&x| quantize(x)).collect(),
        Scope::Heterogeneous { lens_index, cap_radius } => {
            let mask = cap_mask(w, h, lens_index, cap_radius);
            let mut out = src.to_vec();
            for (p, &m) in mask.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    let i = p * 3 + c;
                    out[i] = quantize(m * effect[i] + (1.0 - m) * f64::from(src[i]));
                }
            }
            out
        }
    };
    Ok(img.with_data(data))
}

#[inline]
fn quantize(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}

/// Per-pixel cap weight: 1 inside `cap_radius`, smoothstep falloff across the
/// 5° ramp, 0 beyond.
pub fn cap_mask(w: usize, h: usize, lens_index: usize, cap_radius: f64) -> Vec<f64> {
    let lens = lens_direction(lens_index).expect("lens index validated");
    let ramp = CAP_RAMP_DEG.to_radians();
    let (wf, hf) = (w as f64, h as f64);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = erp_to_sphere(x as f64 + 0.5, y as f64 + 0.5, wf, hf).expect("pixel centers are in range");
            let d = p.angular_distance(lens);
            let m = if d <= cap_radius {
                1.0
            } else if d >= cap_radius + ramp {
                0.0
            } else {
                let t = (d - cap_radius) / ramp;
                1.0 - t * t * (3.0 - 2.0 * t)
            };
            mask.push(m);
        }
    }
    mask
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Symmetric reflection (`cba|abc|cba`) for any offset.
#[inline]
fn reflect(i: isize, n: isize) -> usize {
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Separable Gaussian over an interleaved RGB plane: horizontal wraparound,
/// vertical reflection, kernel truncated at 3σ.
pub fn gaussian_blur_rgb(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (wi, hi) = (w as isize, h as isize);
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (t, &kw) in k.iter().enumerate() {
                let sx = (x as isize + t as isize - r).rem_euclid(wi) as usize;
                let o = (row + sx) * 3;
                acc[0] += kw * plane[o];
                acc[1] += kw * plane[o + 1];
                acc[2] += kw * plane[o + 2];
            }
            tmp[(row + x) * 3..(row + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (t, &kw) in k.iter().enumerate() {
                let sy = reflect(y as isize + t as isize - r, hi);
                let o = (sy * w + x) * 3;
                acc[0] += kw * tmp[o];
                acc[1] += kw * tmp[o + 1];
                acc[2] += kw * tmp[o + 2];
            }
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    out
}

/// Separable Gaussian over a single-channel plane with reflection on all
/// sides. Used for viewport-level sharpness checks.
pub fn gaussian_blur_plane(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return plane.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (wi, hi) = (w as isize, h as isize);
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, &kw)| kw * plane[y * w + reflect(x as isize + t as isize - r, wi)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, &kw)| kw * tmp[reflect(y as isize + t as isize - r, hi) * w + x])
                .sum();
        }
    }
    out
}

/// Shears the half panorama east of `seam_lon` horizontally by an offset
/// growing linearly from `-shift` (top row) to `+shift` (bottom row), with a
/// linear blend over two pixels at both region borders.
fn stitch_seam(img: &ErpImage, shift: f64, seam_lon: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let wf = w as f64;
    let half = wf / 2.0;
    let seam_col = ((seam_lon / std::f64::consts::TAU + 0.5) * wf).rem_euclid(wf);
    let mut out: Vec<f64> = src.iter().map(|&x| f64::from(x)).collect();
    for y in 0..h {
        let offset = shift * (2.0 * (y as f64 + 0.5) / h as f64 - 1.0);
        for x in 0..w {
            let dx = (x as f64 + 0.5 - seam_col).rem_euclid(wf);
            if dx >= half {
                continue;
            }
            let edge = dx.min(half - dx);
            let a = (edge / SEAM_BLEND_PX).min(1.0);
            let sx = x as f64 + offset;
            let x0 = sx.floor();
            let t = sx - x0;
            let c0 = (x0 as isize).rem_euclid(w as isize) as usize;
            let c1 = (c0 + 1) % w;
            for c in 0..3 {
                let v0 = f64::from(src[(y * w + c0) * 3 + c]);
                let v1 = f64::from(src[(y * w + c1) * 3 + c]);
                let sheared = v0 * (1.0 - t) + v1 * t;
                let i = (y * w + x) * 3 + c;
                out[i] = a * sheared + (1.0 - a) * out[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> ErpImage {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let v = ((x * 31 + y * 17 + (x * y) % 13) % 256) as u8;
                data.extend_from_slice(&[v, v.wrapping_mul(3), 255 - v]);
            }
        }
        ErpImage::new("tex", w, h, data).unwrap()
    }

    fn homo(kind: DistortionKind) -> DistortionSpec {
        DistortionSpec {
            kind,
            scope: Scope::Homogeneous,
            level: 1,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = textured(64, 32);
        let out = apply_distortion(&img, &homo(DistortionKind::GaussianNoise { sigma: 0.0 }), 9).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn blur_keeps_constant_image() {
        let img = ErpImage::filled("c", 64, 32, [77, 140, 3]).unwrap();
        for sigma in [0.5, 1.0, 4.0, 16.0, 40.0] {
            let out = apply_distortion(&img, &homo(DistortionKind::GaussianBlur { sigma }), 0).unwrap();
            assert_eq!(out, img, "sigma {sigma}");
        }
    }

    #[test]
    fn noise_residual_statistics() {
        let img = ErpImage::filled("g", 512, 256, [128, 128, 128]).unwrap();
        let out = apply_distortion(&img, &homo(DistortionKind::GaussianNoise { sigma: 10.0 }), 42).unwrap();
        let n = out.data().len() as f64;
        let res: Vec<f64> = out.data().iter().map(|&x| f64::from(x) - 128.0).collect();
        let mean = res.iter().sum::<f64>() / n;
        let sd = (res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        assert!((9.5..=10.5).contains(&sd), "{sd}");
        assert!(mean.abs() < 0.1);
    }

    #[test]
    fn noise_is_seeded() {
        let img = textured(64, 32);
        let spec = homo(DistortionKind::GaussianNoise { sigma: 20.0 });
        let a = apply_distortion(&img, &spec, 5).unwrap();
        assert_eq!(a, apply_distortion(&img, &spec, 5).unwrap());
        assert_ne!(a, apply_distortion(&img, &spec, 6).unwrap());
    }

    #[test]
    fn brightness_clamps() {
        let img = ErpImage::filled("b", 32, 16, [250, 10, 128]).unwrap();
        let out = apply_distortion(&img, &homo(DistortionKind::BrightnessShift { delta: 20.0 }), 0).unwrap();
        assert_eq!(out.pixel(3, 3), [255, 30, 148]);
        let out = apply_distortion(&img, &homo(DistortionKind::BrightnessShift { delta: -20.0 }), 0).unwrap();
        assert_eq!(out.pixel(3, 3), [230, 0, 108]);
    }

    #[test]
    fn heterogeneous_blur_is_local() {
        let img = textured(256, 128);
        let cap = 50f64.to_radians();
        let spec = DistortionSpec {
            kind: DistortionKind::GaussianBlur { sigma: 4.0 },
            scope: Scope::Heterogeneous {
                lens_index: 0,
                cap_radius: cap,
            },
            level: 3,
        };
        let out = apply_distortion(&img, &spec, 0).unwrap();
        let lens = lens_direction(0).unwrap();
        let (mut changed_inside, mut outside) = (0, 0);
        for y in 0..128 {
            for x in 0..256 {
                let p = erp_to_sphere(x as f64 + 0.5, y as f64 + 0.5, 256.0, 128.0).unwrap();
                let d = p.angular_distance(lens);
                if d >= cap + CAP_RAMP_DEG.to_radians() {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                    outside += 1;
                } else if d < cap && out.pixel(x, y) != img.pixel(x, y) {
                    changed_inside += 1;
                }
            }
        }
        assert!(outside > 0 && changed_inside > 1000);
    }

    #[test]
    fn stitch_changes_one_side_only() {
        let img = textured(128, 64);
        let spec = homo(DistortionKind::StitchSeam {
            shift: 8.0,
            seam_lon: 0.0,
        });
        let out = apply_distortion(&img, &spec, 0).unwrap();
        // seam at column 64: the western half is untouched
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(out.pixel(x, y), img.pixel(x, y));
            }
        }
        assert_ne!(out, img);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(
            homo(DistortionKind::GaussianBlur { sigma: -1.0 }).validate(),
            Err(DistortionError::Sigma(-1.0))
        );
        assert_eq!(
            homo(DistortionKind::BrightnessShift { delta: 129.0 }).validate(),
            Err(DistortionError::Delta(129.0))
        );
        let mut s = homo(DistortionKind::BrightnessShift { delta: 1.0 });
        s.level = 6;
        assert_eq!(s.validate(), Err(DistortionError::Level(6)));
        s.level = 2;
        s.scope = Scope::Heterogeneous {
            lens_index: 6,
            cap_radius: 1.0,
        };
        assert_eq!(s.validate(), Err(DistortionError::Lens(6)));
    }

    #[test]
    fn ladders_are_monotone() {
        for ladder in [BLUR_SIGMAS, NOISE_SIGMAS, BRIGHTNESS_DELTAS, STITCH_SHIFTS] {
            assert!(ladder.windows(2).all(|p| p[0] < p[1]));
        }
        let s = DistortionSpec::from_level(DistortionType::Gn, 3, Scope::Homogeneous, 0.0).unwrap();
        assert_eq!(s.kind, DistortionKind::GaussianNoise { sigma: 20.0 });
        assert!(DistortionSpec::from_level(DistortionType::Gb, 0, Scope::Homogeneous, 0.0).is_err());
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(9, 4), 1);
    }
}
