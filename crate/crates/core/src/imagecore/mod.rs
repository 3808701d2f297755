//! Image representation shared by every stage of the engine.
//!
//! [`ImageBuf`] stores three planar `f32` channels in row-major order with a
//! nominal range of `[0, 1]`. Quantization only happens at codec boundaries.

mod codec;
pub mod filter;
mod resample;

pub use codec::{decode_image, encode_jpeg, encode_png, load_image, save_image, DEFAULT_JPEG_QUALITY};
pub use resample::{resize, resize_plane, ResampleKernel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed image file: {0}")]
    MalformedFile(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("rect {rect:?} does not fit inside a {width}x{height} image")]
    RectOutOfBounds { rect: PixelRect, width: u32, height: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A single floating-point plane (luma, dark channel, masks, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid("zero-sized plane".into()));
        }
        if data.len() != width as usize * height as usize {
            return Err(ImageError::Invalid(format!(
                "plane of {width}x{height} needs {} samples, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self { width, height, data: vec![value; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Sample with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[y * self.width as usize + x]
    }

    pub fn row(&self, y: u32) -> &[f32] {
        let w = self.width as usize;
        &self.data[y as usize * w..(y as usize + 1) * w]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Planar RGB image with samples nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl ImageBuf {
    /// Builds an image from planar samples (all of R, then G, then B).
    pub fn from_planar(width: u32, height: u32, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid("image dimensions must be at least 1x1".into()));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::Invalid(format!(
                "{width}x{height} image needs {expected} samples, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::Invalid("non-finite sample".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_planes(r: Plane, g: Plane, b: Plane) -> Result<Self, ImageError> {
        if r.width != g.width || r.width != b.width || r.height != g.height || r.height != b.height {
            return Err(ImageError::DimensionMismatch("channel planes differ in size".into()));
        }
        let (w, h) = (r.width, r.height);
        let mut data = r.data;
        data.extend_from_slice(&g.data);
        data.extend_from_slice(&b.data);
        Self::from_planar(w, h, data)
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, n));
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = vec![0.0f32; n * 3];
        for y in 0..height {
            for x in 0..width {
                let i = y as usize * width as usize + x as usize;
                let px = f(x, y);
                data[i] = px[0];
                data[n + i] = px[1];
                data[2 * n + i] = px[2];
            }
        }
        Self { width, height, data }
    }

    /// Same image replicated from one plane into all three channels.
    pub fn from_gray(plane: &Plane) -> Self {
        let mut data = Vec::with_capacity(plane.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&plane.data);
        }
        Self { width: plane.width, height: plane.height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn max_side(&self) -> u32 {
        self.width.max(self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_plane(&self, c: usize) -> Plane {
        Plane { width: self.width, height: self.height, data: self.channel(c).to_vec() }
    }

    pub fn planes(&self) -> [Plane; 3] {
        [self.channel_plane(0), self.channel_plane(1), self.channel_plane(2)]
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let n = self.pixel_count();
        let i = y as usize * self.width as usize + x as usize;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    /// Applies `f` to every sample and clamps the result to `[0, 1]`.
    pub fn map_samples(&self, f: impl Fn(f32) -> f32) -> ImageBuf {
        ImageBuf {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp01(f(v))).collect(),
        }
    }

    /// Applies a plane-wise filter to each channel independently.
    pub fn map_planes(&self, f: impl Fn(&Plane) -> Plane) -> ImageBuf {
        let [r, g, b] = self.planes();
        let (r, g, b) = (f(&r), f(&g), f(&b));
        let mut data = r.data;
        data.extend_from_slice(&g.data);
        data.extend_from_slice(&b.data);
        let mut out = ImageBuf { width: r.width, height: r.height, data };
        out.clamp_in_place();
        out
    }

    pub fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = clamp01(*v);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn flip_horizontal(&self) -> ImageBuf {
        let w = self.width as usize;
        let mut data = self.data.clone();
        for row in data.chunks_mut(w) {
            row.reverse();
        }
        ImageBuf { width: self.width, height: self.height, data }
    }

    pub fn crop(&self, rect: PixelRect) -> Result<ImageBuf, ImageError> {
        rect.check_within(self.width, self.height)?;
        let n = self.pixel_count();
        let mut data = Vec::with_capacity(rect.w as usize * rect.h as usize * 3);
        for c in 0..3 {
            for y in rect.y..rect.y + rect.h {
                let start = c * n + y as usize * self.width as usize + rect.x as usize;
                data.extend_from_slice(&self.data[start..start + rect.w as usize]);
            }
        }
        Ok(ImageBuf { width: rect.w, height: rect.h, data })
    }
}

#[inline]
pub fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// BT.601 full-range luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Y = 0.299 R + 0.587 G + 0.114 B per pixel.
pub fn rgb_to_luma(img: &ImageBuf) -> Plane {
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
        .collect();
    Plane { width: img.width, height: img.height, data }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn check_within(&self, width: u32, height: u32) -> Result<(), ImageError> {
        let fits = self.w >= 1
            && self.h >= 1
            && (self.x as u64 + self.w as u64) <= width as u64
            && (self.y as u64 + self.h as u64) <= height as u64;
        if fits {
            Ok(())
        } else {
            Err(ImageError::RectOutOfBounds { rect: *self, width, height })
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }
}

/// Pastes `patch` into `dst` at `rect`.
///
/// Pixels at least `feather` deep inside the rect take the patch value exactly.
/// Within the band the patch weight ramps linearly: the sample at distance
/// `d` (0-based) from the rect edge gets alpha `d / feather`.
pub fn paste_region(dst: &ImageBuf, patch: &ImageBuf, rect: PixelRect, feather: u32) -> Result<ImageBuf, ImageError> {
    rect.check_within(dst.width, dst.height)?;
    if patch.dims() != (rect.w, rect.h) {
        return Err(ImageError::DimensionMismatch(format!(
            "patch is {}x{} but rect is {}x{}",
            patch.width, patch.height, rect.w, rect.h
        )));
    }
    let mut out = dst.clone();
    let n = dst.pixel_count();
    let pn = patch.pixel_count();
    for py in 0..rect.h {
        for px in 0..rect.w {
            let edge = px.min(py).min(rect.w - 1 - px).min(rect.h - 1 - py);
            let alpha = if feather == 0 || edge >= feather {
                1.0f32
            } else {
                edge as f32 / feather as f32
            };
            let di = (rect.y + py) as usize * dst.width as usize + (rect.x + px) as usize;
            let si = py as usize * rect.w as usize + px as usize;
            for c in 0..3 {
                let p = patch.data[c * pn + si];
                let d = dst.data[c * n + di];
                out.data[c * n + di] = if alpha >= 1.0 { p } else { d + alpha * (p - d) };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_weights() {
        let white = ImageBuf::filled(2, 2, [1.0, 1.0, 1.0]);
        assert!((rgb_to_luma(&white).get(0, 0) - 1.0).abs() < 1e-6);
        let green = ImageBuf::filled(1, 1, [0.0, 1.0, 0.0]);
        assert!((rgb_to_luma(&green).get(0, 0) - 0.587).abs() < 1e-7);
        let blue = ImageBuf::filled(1, 1, [0.0, 0.0, 1.0]);
        assert!((rgb_to_luma(&blue).get(0, 0) - 0.114).abs() < 1e-7);
    }

    #[test]
    fn hard_paste() {
        let dst = ImageBuf::filled(8, 8, [1.0; 3]);
        let patch = ImageBuf::filled(4, 3, [0.0; 3]);
        let rect = PixelRect::new(2, 3, 4, 3);
        let out = paste_region(&dst, &patch, rect, 0).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expected = if rect.contains(x, y) { 0.0 } else { 1.0 };
                assert_eq!(out.pixel(x, y), [expected; 3]);
            }
        }
    }

    #[test]
    fn feather_midpoint_is_half() {
        // Ramp 0 -> 1 over two columns: alpha 0 at the edge, 0.5 in the middle.
        let dst = ImageBuf::filled(20, 20, [1.0; 3]);
        let patch = ImageBuf::filled(10, 10, [0.0; 3]);
        let rect = PixelRect::new(5, 5, 10, 10);
        let out = paste_region(&dst, &patch, rect, 2).unwrap();
        assert!((out.pixel(5, 10)[0] - 1.0).abs() < 1e-6);
        assert!((out.pixel(6, 10)[0] - 0.5).abs() < 1e-6);
        assert_eq!(out.pixel(7, 10)[0], 0.0);
        assert_eq!(out.pixel(4, 10)[0], 1.0);
    }

    #[test]
    fn self_paste_identity() {
        let img = ImageBuf::from_fn(16, 12, |x, y| [x as f32 / 16.0, y as f32 / 12.0, 0.3]);
        let rect = PixelRect::new(3, 2, 9, 7);
        let crop = img.crop(rect).unwrap();
        for feather in [0, 1, 3] {
            assert_eq!(paste_region(&img, &crop, rect, feather).unwrap(), img);
        }
    }

    #[test]
    fn paste_out_of_bounds() {
        let dst = ImageBuf::filled(4, 4, [0.0; 3]);
        let patch = ImageBuf::filled(3, 3, [0.0; 3]);
        let err = paste_region(&dst, &patch, PixelRect::new(2, 2, 3, 3), 0).unwrap_err();
        assert!(matches!(err, ImageError::RectOutOfBounds { .. }));
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(ImageBuf::from_planar(2, 2, vec![0.0; 11]).is_err());
        assert!(ImageBuf::from_planar(0, 2, vec![]).is_err());
        assert!(ImageBuf::from_planar(1, 1, vec![0.0, f32::NAN, 0.0]).is_err());
    }
}
