//! Natural Image Quality Evaluator.
//!
//! Features follow the usual NIQE layout: for each of two scales (full and
//! half resolution) an AGGD fit of the MSCN coefficients (shape, mean scale)
//! plus fits of the four neighbour products (shape, mean offset, left scale,
//! right scale), for 2 x 18 = 36 values per patch. The score is the
//! Mahalanobis-style distance between the pristine Gaussian and the Gaussian
//! fitted to the test image's sharpest patches.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggd::fit_aggd_lenient;
use super::MetricError;
use crate::imagecore::filter::{gaussian_kernel_with_radius, local_moments};
use crate::imagecore::{resize_plane, rgb_to_luma, ImageBuf, Plane, ResampleKernel};

pub const NIQE_FEATURE_DIM: usize = 36;
const MODEL_VERSION: u32 = 1;
const MSCN_C: f32 = 1.0;
const PINV_TOLERANCE: f64 = 1e-10;

static DEFAULT_MODEL_JSON: &str = include_str!("../../assets/niqe_pristine.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NiqeModel {
    pub version: u32,
    pub patch_size: u32,
    pub sharpness_fraction: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl NiqeModel {
    pub fn new(patch_size: u32, sharpness_fraction: f64, mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let model = Self { version: MODEL_VERSION, patch_size, sharpness_fraction, mu, sigma };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: String| Err(MetricError::InvalidModel(m));
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported model version {}", self.version));
        }
        if self.patch_size < 8 || self.patch_size % 2 != 0 {
            return bad(format!("patch size {} must be even and >= 8", self.patch_size));
        }
        if !(self.sharpness_fraction > 0.0 && self.sharpness_fraction <= 1.0) {
            return bad(format!("sharpness fraction {} not in (0, 1]", self.sharpness_fraction));
        }
        if self.mu.len() != NIQE_FEATURE_DIM || self.sigma.len() != NIQE_FEATURE_DIM {
            return bad("model must be 36-dimensional".into());
        }
        for (i, row) in self.sigma.iter().enumerate() {
            if row.len() != NIQE_FEATURE_DIM {
                return bad(format!("sigma row {i} has {} entries", row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || (v - self.sigma[j][i]).abs() > 1e-9 {
                    return bad(format!("sigma not symmetric/finite at ({i},{j})"));
                }
            }
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return bad("non-finite mean".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        let model: NiqeModel = serde_json::from_str(text).map_err(|e| MetricError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn load(path: &Path) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path).map_err(|e| MetricError::InvalidModel(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// The pristine model shipped with the crate.
pub fn default_niqe_model() -> Arc<NiqeModel> {
    static MODEL: OnceLock<Arc<NiqeModel>> = OnceLock::new();
    MODEL
        .get_or_init(|| Arc::new(NiqeModel::from_json(DEFAULT_MODEL_JSON).expect("bundled NIQE model is valid")))
        .clone()
}

fn mscn(plane255: &Plane) -> (Plane, Plane) {
    let k = gaussian_kernel_with_radius(7.0 / 6.0, 3);
    let (mu, sigma) = local_moments(plane255, &k);
    let data = plane255
        .data()
        .iter()
        .zip(mu.data())
        .zip(sigma.data())
        .map(|((&v, &m), &s)| (v - m) / (s + MSCN_C))
        .collect();
    (Plane::new(plane255.width(), plane255.height(), data).expect("same dims"), sigma)
}

/// 18 features of one MSCN patch.
fn patch_features(m: &Plane, x0: usize, y0: usize, size: usize, out: &mut [f64]) {
    let w = m.width() as usize;
    let d = m.data();
    let at = |x: usize, y: usize| d[(y0 + y) * w + x0 + x] as f64;
    let all = (0..size * size).map(|i| at(i % size, i / size));
    let p = fit_aggd_lenient(all);
    out[0] = p.alpha;
    out[1] = (p.beta_l + p.beta_r) / 2.0;

    // horizontal, vertical, main diagonal, anti-diagonal neighbours
    let shifts: [(i64, i64); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];
    for (s, &(dx, dy)) in shifts.iter().enumerate() {
        let xs: Vec<usize> = (0..size).filter(|&x| (x as i64 + dx) >= 0 && ((x as i64 + dx) as usize) < size).collect();
        let ys: Vec<usize> = (0..size).filter(|&y| ((y as i64 + dy) as usize) < size).collect();
        let products = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .map(|(x, y)| at(x, y) * at((x as i64 + dx) as usize, (y as i64 + dy) as usize));
        let p = fit_aggd_lenient(products);
        out[2 + 4 * s] = p.alpha;
        out[3 + 4 * s] = p.mean_offset;
        out[4 + 4 * s] = p.beta_l;
        out[5 + 4 * s] = p.beta_r;
    }
}

/// Per-patch 36-D features of the sharpest `sharpness_fraction` of patches.
///
/// The image is cropped to a whole number of patches from the top-left, so
/// both sides must be at least `2 * patch_size`.
pub fn niqe_features(img: &ImageBuf, patch_size: u32, sharpness_fraction: f64) -> Result<Vec<[f64; NIQE_FEATURE_DIM]>, MetricError> {
    let ps = patch_size as usize;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 2 * ps || h < 2 * ps {
        return Err(MetricError::TooSmall(format!("NIQE needs both sides >= {}, got {w}x{h}", 2 * ps)));
    }
    let (cols, rows) = (w / ps, h / ps);
    let (cw, ch) = (cols * ps, rows * ps);
    let luma = rgb_to_luma(img);
    let cropped = if (cw, ch) == (w, h) {
        luma
    } else {
        let mut data = Vec::with_capacity(cw * ch);
        for y in 0..ch {
            data.extend_from_slice(&luma.row(y as u32)[..cw]);
        }
        Plane::new(cw as u32, ch as u32, data).expect("crop dims")
    };
    let half = resize_plane(&cropped, (cw / 2) as u32, (ch / 2) as u32, ResampleKernel::Bicubic);
    let (full_mscn, full_sigma) = mscn(&cropped.map(|v| v * 255.0));
    let (half_mscn, _) = mscn(&half.map(|v| v * 255.0));

    let mut patches: Vec<(usize, usize, f64)> = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0f64;
            for y in r * ps..(r + 1) * ps {
                acc += full_sigma.row(y as u32)[c * ps..(c + 1) * ps].iter().map(|&v| v as f64).sum::<f64>();
            }
            patches.push((r, c, acc / (ps * ps) as f64));
        }
    }
    let keep = ((patches.len() as f64 * sharpness_fraction).ceil() as usize).clamp(1, patches.len());
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by(|&a, &b| patches[b].2.total_cmp(&patches[a].2).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order[..keep].to_vec();
    selected.sort_unstable();

    let feats = selected
        .par_iter()
        .map(|&i| {
            let (r, c, _) = patches[i];
            let mut f = [0.0f64; NIQE_FEATURE_DIM];
            patch_features(&full_mscn, c * ps, r * ps, ps, &mut f[..18]);
            patch_features(&half_mscn, c * ps / 2, r * ps / 2, ps / 2, &mut f[18..]);
            f
        })
        .collect();
    Ok(feats)
}

fn mean_and_cov(feats: &[[f64; NIQE_FEATURE_DIM]]) -> (DVector<f64>, DMatrix<f64>) {
    let n = feats.len();
    let mut mu = DVector::<f64>::zeros(NIQE_FEATURE_DIM);
    for f in feats {
        for (i, v) in f.iter().enumerate() {
            mu[i] += v;
        }
    }
    mu /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(NIQE_FEATURE_DIM, NIQE_FEATURE_DIM);
    if n > 1 {
        for f in feats {
            let d = DVector::from_iterator(NIQE_FEATURE_DIM, f.iter().zip(mu.iter()).map(|(v, m)| v - m));
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
    }
    (mu, cov)
}

/// Fits a pristine model over the sharp-patch features of `images`.
pub fn fit_niqe_model(images: &[ImageBuf], patch_size: u32, sharpness_fraction: f64) -> Result<NiqeModel, MetricError> {
    let mut all = Vec::new();
    for img in images {
        all.extend(niqe_features(img, patch_size, sharpness_fraction)?);
    }
    if all.len() < 2 {
        return Err(MetricError::DegenerateInput("need at least two patches to fit a model".into()));
    }
    let (mu, cov) = mean_and_cov(&all);
    // symmetrize exactly so the model round-trips through validation
    let sigma = (0..NIQE_FEATURE_DIM)
        .map(|i| (0..NIQE_FEATURE_DIM).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect())
        .collect();
    NiqeModel::new(patch_size, sharpness_fraction, mu.iter().copied().collect(), sigma)
}

fn invert(m: DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    if let Some(chol) = m.clone().cholesky() {
        let inv = chol.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return Ok(inv);
        }
    }
    let pinv = m.pseudo_inverse(PINV_TOLERANCE).map_err(|_| MetricError::SingularCovariance)?;
    if pinv.iter().all(|v| v.is_finite()) {
        Ok(pinv)
    } else {
        Err(MetricError::SingularCovariance)
    }
}

/// NIQE score (lower is better).
pub fn niqe(img: &ImageBuf, model: &NiqeModel) -> Result<f64, MetricError> {
    let feats = niqe_features(img, model.patch_size, model.sharpness_fraction)?;
    let (mu2, cov2) = mean_and_cov(&feats);
    let mu1 = DVector::from_column_slice(&model.mu);
    let cov1 = DMatrix::from_fn(NIQE_FEATURE_DIM, NIQE_FEATURE_DIM, |i, j| model.sigma[i][j]);
    let pooled = (cov1 + cov2) / 2.0;
    let inv = invert(pooled)?;
    let d = mu1 - mu2;
    let q = (d.transpose() * inv * &d)[(0, 0)];
    if !q.is_finite() {
        return Err(MetricError::SingularCovariance);
    }
    Ok(q.max(0.0).sqrt())
}
