//! Rule-based degradation detectors on simple image statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DegradationKind;
use crate::imagecore::filter::{laplacian, min_filter, sobel};
use crate::imagecore::{rgb_to_luma, ImageBuf, Plane};

/// Detector thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub noise_sigma: f64,
    pub blur_laplacian_var: f64,
    /// Minimum variance of the gradient magnitude for blur to be considered;
    /// flat or linear images have no edges to be blurred.
    pub blur_min_gradient_var: f64,
    pub motion_anisotropy: f64,
    pub blockiness_ratio: f64,
    pub haze_dark_channel: f64,
    pub dark_channel_patch: usize,
    pub low_light_luma: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.02,
            blur_laplacian_var: 1e-3,
            blur_min_gradient_var: 1e-5,
            motion_anisotropy: 2.0,
            blockiness_ratio: 1.15,
            haze_dark_channel: 0.6,
            dark_channel_patch: 15,
            low_light_luma: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorStats {
    pub noise_sigma: f64,
    pub laplacian_var: f64,
    pub gradient_var: f64,
    pub anisotropy: f64,
    pub blockiness: f64,
    pub dark_channel: f64,
    pub mean_luma: f64,
}

fn interior(p: &Plane) -> Vec<f64> {
    let (w, h) = (p.width(), p.height());
    if w < 3 || h < 3 {
        return p.data().iter().map(|&v| v as f64).collect();
    }
    (1..h - 1).flat_map(|y| p.row(y)[1..(w - 1) as usize].iter().map(|&v| v as f64)).collect()
}

fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

/// Noise sigma from the median absolute Laplacian response. For white noise
/// the 4-neighbour Laplacian has standard deviation `sigma * sqrt(20)`.
pub fn estimate_noise_sigma(luma: &Plane) -> f64 {
    let mut abs: Vec<f64> = interior(&laplacian(luma)).into_iter().map(f64::abs).collect();
    if abs.is_empty() {
        return 0.0;
    }
    let mid = abs.len() / 2;
    let (_, m, _) = abs.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m / 0.6745 / 20f64.sqrt()
}

/// Ratio of the structure tensor eigenvalues, summed over the image.
pub fn gradient_anisotropy(gx: &Plane, gy: &Plane) -> f64 {
    let (mut xx, mut yy, mut xy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in gx.data().iter().zip(gy.data()) {
        let (a, b) = (a as f64, b as f64);
        xx += a * a;
        yy += b * b;
        xy += a * b;
    }
    let tr = xx + yy;
    if tr <= 1e-12 {
        return 1.0;
    }
    let disc = ((xx - yy).powi(2) + 4.0 * xy * xy).sqrt();
    let (l1, l2) = ((tr + disc) / 2.0, ((tr - disc) / 2.0).max(0.0));
    l1 / l2.max(tr * 1e-9)
}

/// Mean absolute step across 8-pixel block boundaries divided by the mean
/// step elsewhere. About 1 for natural images.
pub fn blockiness(luma: &Plane) -> f64 {
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    if w < 16 && h < 16 {
        return 1.0;
    }
    let d = luma.data();
    let (mut edge, mut ne, mut inner, mut ni) = (0.0f64, 0usize, 0.0f64, 0usize);
    let mut add = |on_grid: bool, v: f64| {
        if on_grid {
            edge += v;
            ne += 1;
        } else {
            inner += v;
            ni += 1;
        }
    };
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            add(x % 8 == 7, (d[y * w + x + 1] - d[y * w + x]).abs() as f64);
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            add(y % 8 == 7, (d[(y + 1) * w + x] - d[y * w + x]).abs() as f64);
        }
    }
    if ne == 0 || ni == 0 {
        return 1.0;
    }
    let (edge, inner) = (edge / ne as f64, inner / ni as f64);
    if inner < 1e-6 {
        // flat interiors: any visible step on the grid is blocking
        return if edge > 1e-4 { f64::INFINITY } else { 1.0 };
    }
    edge / inner
}

pub fn mean_dark_channel(img: &ImageBuf, patch: usize) -> f64 {
    let [r, g, b] = img.planes();
    let min_rgb = Plane::from_fn(img.width(), img.height(), |x, y| r.get(x, y).min(g.get(x, y)).min(b.get(x, y)));
    min_filter(&min_rgb, patch.max(1) | 1).mean()
}

pub fn compute_stats(img: &ImageBuf, cfg: &DetectorConfig) -> DetectorStats {
    let luma = rgb_to_luma(img);
    let lap = interior(&laplacian(&luma));
    let (gx, gy) = sobel(&luma);
    let mag = Plane::from_fn(luma.width(), luma.height(), |x, y| gx.get(x, y).hypot(gy.get(x, y)));
    DetectorStats {
        noise_sigma: estimate_noise_sigma(&luma),
        laplacian_var: variance(&lap),
        gradient_var: variance(&interior(&mag)),
        anisotropy: gradient_anisotropy(&gx, &gy),
        blockiness: blockiness(&luma),
        dark_channel: mean_dark_channel(img, cfg.dark_channel_patch),
        mean_luma: luma.mean(),
    }
}

pub fn classify(stats: &DetectorStats, cfg: &DetectorConfig, brightening: bool) -> BTreeSet<DegradationKind> {
    let mut out = BTreeSet::new();
    if stats.noise_sigma > cfg.noise_sigma {
        out.insert(DegradationKind::Noise);
    }
    if stats.laplacian_var < cfg.blur_laplacian_var && stats.gradient_var > cfg.blur_min_gradient_var {
        out.insert(if stats.anisotropy < cfg.motion_anisotropy { DegradationKind::DefocusBlur } else { DegradationKind::MotionBlur });
    }
    if stats.blockiness > cfg.blockiness_ratio {
        out.insert(DegradationKind::JpegArtifact);
    }
    if stats.dark_channel > cfg.haze_dark_channel {
        out.insert(DegradationKind::Haze);
    }
    if brightening && stats.mean_luma < cfg.low_light_luma {
        out.insert(DegradationKind::LowLight);
    }
    out
}

pub fn detect(img: &ImageBuf, cfg: &DetectorConfig, brightening: bool) -> (BTreeSet<DegradationKind>, DetectorStats) {
    let stats = compute_stats(img, cfg);
    (classify(&stats, cfg, brightening), stats)
}
