use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clamp01, ImageBuf, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleKernel {
    Nearest,
    Bilinear,
    /// Catmull-Rom cubic (a = -0.5).
    Bicubic,
    Lanczos3,
}

impl ResampleKernel {
    fn support(self) -> f64 {
        match self {
            ResampleKernel::Nearest => 0.5,
            ResampleKernel::Bilinear => 1.0,
            ResampleKernel::Bicubic => 2.0,
            ResampleKernel::Lanczos3 => 3.0,
        }
    }

    fn weight(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            ResampleKernel::Nearest => {
                if ax < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            ResampleKernel::Bilinear => (1.0 - ax).max(0.0),
            ResampleKernel::Bicubic => {
                const A: f64 = -0.5;
                if ax <= 1.0 {
                    ((A + 2.0) * ax - (A + 3.0)) * ax * ax + 1.0
                } else if ax < 2.0 {
                    ((A * ax - 5.0 * A) * ax + 8.0 * A) * ax - 4.0 * A
                } else {
                    0.0
                }
            }
            ResampleKernel::Lanczos3 => {
                if ax < 1e-12 {
                    1.0
                } else if ax < 3.0 {
                    let px = std::f64::consts::PI * ax;
                    3.0 * px.sin() * (px / 3.0).sin() / (px * px)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-output-sample contribution list: first source index and weights.
struct Taps {
    start: Vec<usize>,
    weights: Vec<Vec<f32>>,
}

fn build_taps(in_len: u32, out_len: u32, kernel: ResampleKernel) -> Taps {
    let scale = out_len as f64 / in_len as f64;
    let mut start = Vec::with_capacity(out_len as usize);
    let mut weights = Vec::with_capacity(out_len as usize);
    if kernel == ResampleKernel::Nearest {
        for i in 0..out_len {
            let src = (((i as f64 + 0.5) / scale).floor() as i64).clamp(0, in_len as i64 - 1);
            start.push(src as usize);
            weights.push(vec![1.0]);
        }
        return Taps { start, weights };
    }
    // Downscaling widens the kernel so it also acts as the antialiasing filter.
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = kernel.support() * stretch;
    for i in 0..out_len {
        let center = (i as f64 + 0.5) / scale - 0.5;
        let lo = (center - support).floor() as i64;
        let hi = (center + support).ceil() as i64;
        let lo_c = lo.clamp(0, in_len as i64 - 1);
        let hi_c = hi.clamp(0, in_len as i64 - 1);
        let mut acc = vec![0.0f64; (hi_c - lo_c + 1) as usize];
        for j in lo..=hi {
            let w = kernel.weight((j as f64 - center) / stretch);
            if w != 0.0 {
                acc[(j.clamp(lo_c, hi_c) - lo_c) as usize] += w;
            }
        }
        let total: f64 = acc.iter().sum();
        if total.abs() < 1e-12 {
            let idx = (center.round() as i64).clamp(0, in_len as i64 - 1) as usize;
            start.push(idx);
            weights.push(vec![1.0]);
            continue;
        }
        start.push(lo_c as usize);
        weights.push(acc.iter().map(|w| (w / total) as f32).collect());
    }
    Taps { start, weights }
}

/// Separable resampling of one plane; output is clamped to `[0, 1]`.
pub fn resize_plane(plane: &Plane, out_w: u32, out_h: u32, kernel: ResampleKernel) -> Plane {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be at least 1x1");
    let (in_w, in_h) = (plane.width(), plane.height());
    let xt = build_taps(in_w, out_w, kernel);
    let yt = build_taps(in_h, out_h, kernel);
    let src = plane.data();

    // horizontal pass: in_h rows of out_w
    let mut tmp = vec![0.0f32; in_h as usize * out_w as usize];
    tmp.par_chunks_mut(out_w as usize).enumerate().for_each(|(y, row)| {
        let srow = &src[y * in_w as usize..(y + 1) * in_w as usize];
        for (x, out) in row.iter_mut().enumerate() {
            let s = xt.start[x];
            *out = xt.weights[x].iter().enumerate().map(|(k, w)| w * srow[s + k]).sum();
        }
    });

    let mut data = vec![0.0f32; out_w as usize * out_h as usize];
    data.par_chunks_mut(out_w as usize).enumerate().for_each(|(y, row)| {
        let s = yt.start[y];
        for (k, w) in yt.weights[y].iter().enumerate() {
            let trow = &tmp[(s + k) * out_w as usize..(s + k + 1) * out_w as usize];
            for (o, t) in row.iter_mut().zip(trow) {
                *o += w * t;
            }
        }
        for o in row.iter_mut() {
            *o = clamp01(*o);
        }
    });
    Plane::new(out_w, out_h, data).expect("dimensions checked above")
}

/// Resizes to exactly `out_w` x `out_h`.
pub fn resize(img: &ImageBuf, out_w: u32, out_h: u32, kernel: ResampleKernel) -> ImageBuf {
    if img.dims() == (out_w, out_h) {
        return img.clone();
    }
    img.map_planes(|p| resize_plane(p, out_w, out_h, kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr_y;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KERNELS: [ResampleKernel; 4] =
        [ResampleKernel::Nearest, ResampleKernel::Bilinear, ResampleKernel::Bicubic, ResampleKernel::Lanczos3];

    #[test]
    fn constant_is_preserved() {
        let img = ImageBuf::filled(7, 5, [0.5; 3]);
        for k in KERNELS {
            let out = resize(&img, 13, 11, k);
            assert_eq!(out.dims(), (13, 11));
            assert!(out.samples().iter().all(|v| (v - 0.5).abs() < 1e-6), "{k:?}");
            let down = resize(&img, 3, 2, k);
            assert!(down.samples().iter().all(|v| (v - 0.5).abs() < 1e-6), "{k:?}");
        }
    }

    #[test]
    fn nearest_replicates_blocks() {
        let img = ImageBuf::from_fn(2, 2, |x, y| if (x + y) % 2 == 0 { [1.0; 3] } else { [0.0; 3] });
        let out = resize(&img, 4, 4, ResampleKernel::Nearest);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(out.pixel(x, y), img.pixel(x / 2, y / 2));
            }
        }
    }

    #[test]
    fn integer_round_trips() {
        // Center-aligned nearest up/down by an integer factor lands back on the
        // original samples, so its round trip is lossless; bicubic is not.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = ImageBuf::from_fn(64, 64, |_, _| [rng.random(), rng.random(), rng.random()]);
        let via = |k| resize(&resize(&img, 256, 256, k), 64, 64, k);
        let nearest = psnr_y(&img, &via(ResampleKernel::Nearest)).unwrap();
        let bicubic = psnr_y(&img, &via(ResampleKernel::Bicubic)).unwrap();
        assert!(nearest.is_infinite());
        assert!(bicubic.is_finite() && bicubic > 15.0, "bicubic round trip {bicubic}");
    }

    #[test]
    fn catmull_rom_interpolates_knots() {
        assert_eq!(ResampleKernel::Bicubic.weight(0.0), 1.0);
        assert!(ResampleKernel::Bicubic.weight(1.0).abs() < 1e-12);
        assert!(ResampleKernel::Bicubic.weight(2.0).abs() < 1e-12);
        // a = -0.5 at x = 0.5: (1.5*0.5 - 2.5)*0.25 + 1 = 0.5625
        assert!((ResampleKernel::Bicubic.weight(0.5) - 0.5625).abs() < 1e-12);
    }
}
