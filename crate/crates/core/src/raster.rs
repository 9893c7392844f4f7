//! Equirectangular source rasters, bilinear resampling and viewport rasters.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use thiserror::Error;

use crate::geometry::SphericalPoint;
use crate::scalar::Scalar;

pub const MIN_ERP_WIDTH: usize = 2;
pub const MIN_ERP_HEIGHT: usize = 1;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("equirectangular image {width}x{height} is not 2:1 (pass the aspect override to accept it)")]
    Aspect { width: usize, height: usize },
    #[error("equirectangular image {width}x{height} is below the 16x8 minimum")]
    TooSmall { width: usize, height: usize },
    #[error("raster data has {actual} samples, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("viewport field of view {0} rad must lie in (0, pi)")]
    FieldOfView(f64),
    #[error("viewport {vp_w}x{vp_h} must be smaller than source {src_w}x{src_h}")]
    ViewportTooLarge {
        vp_w: usize,
        vp_h: usize,
        src_w: usize,
        src_h: usize,
    },
    #[error("empty viewport")]
    EmptyViewport,
    #[error(transparent)]
    Trajectory(#[from] crate::viewport::TrajectoryError),
    #[error("image i/o for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// An 8-bit RGB equirectangular panorama, row-major, 3 samples per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErpImage {
    id: String,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ErpImage {
    /// Builds a 2:1 panorama.
    pub fn new(id: impl Into<String>, width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        Self::with_aspect_check(id, width, height, data, false)
    }

    /// Like [`new`](Self::new); `allow_any_aspect` skips the 2:1 check.
    pub fn with_aspect_check(
        id: impl Into<String>,
        width: usize,
        height: usize,
        data: Vec<u8>,
        allow_any_aspect: bool,
    ) -> Result<Self, RasterError> {
        if width < MIN_ERP_WIDTH || height < MIN_ERP_HEIGHT {
            return Err(RasterError::TooSmall { width, height });
        }
        if !allow_any_aspect && width != 2 * height {
            return Err(RasterError::Aspect { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(RasterError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            data,
        })
    }

    pub fn filled(id: impl Into<String>, width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, RasterError> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(id, width, height, data)
    }

    /// Decodes a PNG or JPEG file. The id is the file stem.
    pub fn open(path: impl AsRef<Path>, allow_any_aspect: bool) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::with_aspect_check(id, w as usize, h as usize, rgb.into_raw(), allow_any_aspect)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        let buf: RgbImage = ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("length validated at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| RasterError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    /// Same geometry, new samples.
    pub(crate) fn with_data(&self, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            id: self.id.clone(),
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Bilinear sample at fractional pixel position `(u, v)`, texel centers at
/// `index + 0.5`. Columns wrap around; rows clamp at the poles.
pub fn sample_bilinear<T: Scalar>(img: &ErpImage, u: T, v: T) -> [T; 3] {
    let w = img.width as isize;
    let h = img.height;
    let half = T::lit(0.5);

    let fx = u - half;
    let x0f = fx.floor();
    let tx = fx - x0f;
    let x0 = (x0f.to_isize().unwrap_or(0)).rem_euclid(w) as usize;
    let x1 = (x0 + 1) % img.width;

    let max_row = T::from_usize_lossy(h - 1);
    let fy = (v - half).max(T::zero()).min(max_row);
    let y0f = fy.floor();
    let ty = fy - y0f;
    let y0 = y0f.to_usize().unwrap_or(0).min(h - 1);
    let y1 = (y0 + 1).min(h - 1);

    let p00 = img.pixel(x0, y0);
    let p10 = img.pixel(x1, y0);
    let p01 = img.pixel(x0, y1);
    let p11 = img.pixel(x1, y1);
    let one = T::one();
    let mut out = [T::zero(); 3];
    for c in 0..3 {
        let a = T::from_u8(p00[c]).unwrap();
        let b = T::from_u8(p10[c]).unwrap();
        let top = a * (one - tx) + b * tx;
        let a = T::from_u8(p01[c]).unwrap();
        let b = T::from_u8(p11[c]).unwrap();
        let bottom = a * (one - tx) + b * tx;
        out[c] = top * (one - ty) + bottom * ty;
    }
    out
}

/// A rectilinear crop of a panorama. Samples are floating point in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Viewport<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
    center: SphericalPoint<T>,
    fov: T,
}

impl<T: Scalar> Viewport<T> {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<T>,
        center: SphericalPoint<T>,
        fov: T,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyViewport);
        }
        if !(fov > T::zero() && fov < T::PI()) {
            return Err(RasterError::FieldOfView(fov.to_f64_lossy()));
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(RasterError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            center,
            fov,
        })
    }

    /// Uniform viewport, mostly for tests.
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self, RasterError> {
        Self::new(
            width,
            height,
            vec![value; width * height * 3],
            SphericalPoint::equator(T::zero()),
            T::FRAC_PI_3(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn center(&self) -> SphericalPoint<T> {
        self.center
    }

    pub fn fov(&self) -> T {
        self.fov
    }

    /// 8-bit RGB samples after round-to-nearest and clamping.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&x| x.round().max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(0))
            .collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_rgb8()).expect("length validated");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| RasterError::Io {
                path: path.display().to_string(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ErpImage {
        let (w, h) = (16, 8);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&[(x * 10) as u8, (y * 20) as u8, 7]);
            }
        }
        ErpImage::new("ramp", w, h, data).unwrap()
    }

    #[test]
    fn rejects_bad_aspect_unless_overridden() {
        let data = vec![0; 20 * 8 * 3];
        assert!(matches!(
            ErpImage::new("x", 20, 8, data.clone()),
            Err(RasterError::Aspect { .. })
        ));
        assert!(ErpImage::with_aspect_check("x", 20, 8, data, true).is_ok());
        assert!(matches!(
            ErpImage::new("x", 0, 0, vec![]),
            Err(RasterError::TooSmall { .. })
        ));
        assert!(matches!(
            ErpImage::new("x", 16, 8, vec![0; 10]),
            Err(RasterError::DataLength { .. })
        ));
    }

    #[test]
    fn constant_image_is_exact_everywhere() {
        let img = ErpImage::filled("c", 32, 16, [12, 200, 99]).unwrap();
        for &(u, v) in &[(0.0, 0.0), (3.3, 7.9), (31.99, 15.5), (-4.0, 20.0), (100.7, 3.2)] {
            assert_eq!(sample_bilinear::<f64>(&img, u, v), [12.0, 200.0, 99.0]);
        }
    }

    #[test]
    fn texel_centers_are_exact() {
        let img = ramp();
        for y in 0..8 {
            for x in 0..16 {
                let s = sample_bilinear::<f64>(&img, x as f64 + 0.5, y as f64 + 0.5);
                let p = img.pixel(x, y);
                assert_eq!(s, [p[0] as f64, p[1] as f64, p[2] as f64]);
            }
        }
    }

    #[test]
    fn midpoint_between_neighbors() {
        let mut data = vec![0u8; 16 * 8 * 3];
        data[3] = 100; // pixel (1, 0), red
        let img = ErpImage::new("m", 16, 8, data).unwrap();
        let s = sample_bilinear::<f64>(&img, 1.0, 0.5);
        assert_eq!(s[0], 50.0);
    }

    #[test]
    fn horizontal_wrap() {
        let img = ramp();
        for &d in &[0.1, 0.5, 3.7, 15.2] {
            let a = sample_bilinear::<f64>(&img, 16.0 + d, 3.3);
            let b = sample_bilinear::<f64>(&img, d, 3.3);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-9);
            }
        }
        // between last and first column
        let s = sample_bilinear::<f64>(&img, 16.0, 0.5);
        assert_eq!(s[0], 75.0);
    }

    #[test]
    fn viewport_export_rounds_and_clamps() {
        let vp = Viewport::new(1, 1, vec![-3.0, 127.5, 300.0], SphericalPoint::equator(0.0), 1.0).unwrap();
        assert_eq!(vp.to_rgb8(), vec![0, 128, 255]);
    }
}
