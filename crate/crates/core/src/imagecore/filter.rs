//! Plane filters shared by the native tools, detectors and metrics.
//! Borders are replicated unless noted otherwise.

use rayon::prelude::*;

use super::Plane;

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    gaussian_kernel_with_radius(sigma, radius as usize)
}

pub fn gaussian_kernel_with_radius(sigma: f64, radius: usize) -> Vec<f32> {
    let r = radius as i64;
    let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| (w / total) as f32).collect()
}

/// Separable convolution with an odd-length kernel applied along both axes.
pub fn separable(plane: &Plane, kx: &[f32], ky: &[f32]) -> Plane {
    let (w, h) = (plane.width() as usize, plane.height() as usize);
    let rx = (kx.len() / 2) as i64;
    let ry = (ky.len() / 2) as i64;
    let src = plane.data();

    let mut tmp = vec![0.0f32; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let srow = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (k, &kv) in kx.iter().enumerate() {
                let sx = (x as i64 + k as i64 - rx).clamp(0, w as i64 - 1) as usize;
                acc += kv * srow[sx];
            }
            *out = acc;
        }
    });

    let mut data = vec![0.0f32; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (k, &kv) in ky.iter().enumerate() {
            let sy = (y as i64 + k as i64 - ry).clamp(0, h as i64 - 1) as usize;
            let trow = &tmp[sy * w..(sy + 1) * w];
            for (o, t) in row.iter_mut().zip(trow) {
                *o += kv * t;
            }
        }
    });
    Plane::new(plane.width(), plane.height(), data).expect("same dims")
}

pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let k = gaussian_kernel(sigma);
    separable(plane, &k, &k)
}

/// Dense 2-D convolution (correlation orientation) with a row-major kernel.
pub fn convolve(plane: &Plane, kernel: &[f32], kw: usize, kh: usize) -> Plane {
    assert_eq!(kernel.len(), kw * kh);
    let (w, h) = (plane.width() as usize, plane.height() as usize);
    let (rx, ry) = ((kw / 2) as i64, (kh / 2) as i64);
    let mut data = vec![0.0f32; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for ky in 0..kh {
                for kx in 0..kw {
                    let kv = kernel[ky * kw + kx];
                    if kv != 0.0 {
                        acc += kv * plane.get_clamped(x as i64 + kx as i64 - rx, y as i64 + ky as i64 - ry);
                    }
                }
            }
            *out = acc;
        }
    });
    Plane::new(plane.width(), plane.height(), data).expect("same dims")
}

/// 4-neighbour Laplacian `[0 1 0; 1 -4 1; 0 1 0]`.
pub fn laplacian(plane: &Plane) -> Plane {
    const K: [f32; 9] = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];
    convolve(plane, &K, 3, 3)
}

/// Sobel derivatives (gx, gy).
pub fn sobel(plane: &Plane) -> (Plane, Plane) {
    const KX: [f32; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
    const KY: [f32; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
    (convolve(plane, &KX, 3, 3), convolve(plane, &KY, 3, 3))
}

/// Square-window minimum filter of the given odd size (separable).
pub fn min_filter(plane: &Plane, size: usize) -> Plane {
    let r = (size / 2) as i64;
    let (w, h) = (plane.width() as usize, plane.height() as usize);
    let src = plane.data();
    let mut tmp = vec![0.0f32; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let lo = (x as i64 - r).max(0) as usize;
            let hi = (x as i64 + r).min(w as i64 - 1) as usize;
            *out = src[y * w + lo..=y * w + hi].iter().copied().fold(f32::INFINITY, f32::min);
        }
    });
    let mut data = vec![0.0f32; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let lo = (y as i64 - r).max(0) as usize;
        let hi = (y as i64 + r).min(h as i64 - 1) as usize;
        for (x, out) in row.iter_mut().enumerate() {
            *out = (lo..=hi).map(|yy| tmp[yy * w + x]).fold(f32::INFINITY, f32::min);
        }
    });
    Plane::new(plane.width(), plane.height(), data).expect("same dims")
}

/// 3x3 median filter.
pub fn median3(plane: &Plane) -> Plane {
    let (w, h) = (plane.width() as usize, plane.height() as usize);
    let mut data = vec![0.0f32; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut win = [0.0f32; 9];
        for (x, out) in row.iter_mut().enumerate() {
            let mut i = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    win[i] = plane.get_clamped(x as i64 + dx, y as i64 + dy);
                    i += 1;
                }
            }
            win.sort_unstable_by(|a, b| a.total_cmp(b));
            *out = win[4];
        }
    });
    Plane::new(plane.width(), plane.height(), data).expect("same dims")
}

/// Normalized line PSF of `length` taps along `angle_deg` (0 = horizontal),
/// rasterized by bilinear splatting into the smallest odd square that fits.
pub fn motion_psf(length: f64, angle_deg: f64) -> (Vec<f32>, usize) {
    let length = length.max(1.0);
    let size = {
        let s = length.ceil() as usize;
        if s % 2 == 0 {
            s + 1
        } else {
            s
        }
    };
    let c = (size / 2) as f64;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut k = vec![0.0f64; size * size];
    let steps = (length * 8.0).ceil() as usize;
    for i in 0..=steps {
        let t = -0.5 * (length - 1.0) + (length - 1.0) * i as f64 / steps.max(1) as f64;
        // image y grows downward; a positive angle tilts the line upward
        let x = c + t * cos;
        let y = c - t * sin;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        for (dx, dy, wgt) in [(0.0, 0.0, (1.0 - fx) * (1.0 - fy)), (1.0, 0.0, fx * (1.0 - fy)), (0.0, 1.0, (1.0 - fx) * fy), (1.0, 1.0, fx * fy)] {
            let (xi, yi) = ((x0 + dx) as i64, (y0 + dy) as i64);
            if xi >= 0 && yi >= 0 && (xi as usize) < size && (yi as usize) < size && wgt > 0.0 {
                k[yi as usize * size + xi as usize] += wgt;
            }
        }
    }
    let total: f64 = k.iter().sum();
    (k.iter().map(|v| (v / total) as f32).collect(), size)
}

/// Local mean and standard deviation over a Gaussian window.
pub fn local_moments(plane: &Plane, kernel: &[f32]) -> (Plane, Plane) {
    let mu = separable(plane, kernel, kernel);
    let sq = plane.map(|v| v * v);
    let mu_sq = separable(&sq, kernel, kernel);
    let sigma: Vec<f32> = mu
        .data()
        .iter()
        .zip(mu_sq.data())
        .map(|(m, s)| (s - m * m).abs().sqrt())
        .collect();
    let sigma = Plane::new(plane.width(), plane.height(), sigma).expect("same dims");
    (mu, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_preserves_constant() {
        let p = Plane::filled(9, 6, 0.3);
        let out = gaussian_blur(&p, 1.5);
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn psf_is_normalized() {
        for angle in [0.0, 30.0, 45.0, 90.0, 137.0] {
            let (k, size) = motion_psf(9.0, angle);
            assert_eq!(size, 9);
            let total: f32 = k.iter().sum();
            assert!((total - 1.0).abs() < 1e-5);
        }
        let (k, size) = motion_psf(9.0, 0.0);
        let mid: f32 = k[4 * size..5 * size].iter().sum();
        assert!((mid - 1.0).abs() < 1e-5, "horizontal PSF must sit on the middle row");
    }

    #[test]
    fn min_filter_window() {
        let p = Plane::from_fn(7, 7, |x, y| if x == 3 && y == 3 { 0.0 } else { 1.0 });
        let out = min_filter(&p, 3);
        assert_eq!(out.get(2, 2), 0.0);
        assert_eq!(out.get(4, 4), 0.0);
        assert_eq!(out.get(1, 1), 1.0);
    }

    #[test]
    fn median_removes_isolated_spike() {
        let p = Plane::from_fn(5, 5, |x, y| if x == 2 && y == 2 { 1.0 } else { 0.2 });
        assert!(median3(&p).data().iter().all(|&v| v == 0.2));
    }
}
