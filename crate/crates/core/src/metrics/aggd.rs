//! Asymmetric generalized Gaussian fit by moment matching over a shape grid
//! (alpha = 0.2, 0.201, ..., 10).

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggdParams {
    pub alpha: f64,
    pub beta_l: f64,
    pub beta_r: f64,
    /// `(beta_r - beta_l) * Gamma(2/alpha) / Gamma(1/alpha)`
    pub mean_offset: f64,
}

const GRID_START: f64 = 0.2;
const GRID_STEP: f64 = 0.001;
const GRID_LEN: usize = 9801;
const MIN_SAMPLES: usize = 64;

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// r(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)), increasing in alpha.
fn ratio_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..GRID_LEN)
            .map(|i| {
                let a = GRID_START + GRID_STEP * i as f64;
                (a, gamma(2.0 / a).powi(2) / (gamma(1.0 / a) * gamma(3.0 / a)))
            })
            .collect()
    })
}

fn nearest_alpha(target: f64) -> f64 {
    let table = ratio_table();
    let idx = table.partition_point(|&(_, r)| r < target);
    let candidates = [idx.saturating_sub(1), idx.min(table.len() - 1)];
    candidates
        .into_iter()
        .min_by(|&i, &j| (table[i].1 - target).powi(2).total_cmp(&(table[j].1 - target).powi(2)))
        .map(|i| table[i].0)
        .unwrap_or(GRID_START)
}

/// Moment-matching core shared by the strict and lenient entry points.
/// Returns `None` when there is no spread at all.
fn fit_moments(samples: impl Iterator<Item = f64> + Clone) -> Option<(AggdParams, usize, usize)> {
    let (mut left_sq, mut n_left, mut right_sq, mut n_right) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum, mut n) = (0.0, 0.0, 0usize);
    for v in samples {
        if v < 0.0 {
            left_sq += v * v;
            n_left += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            n_right += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
        n += 1;
    }
    if n == 0 || sq_sum == 0.0 {
        return None;
    }
    let left_std = if n_left > 0 { (left_sq / n_left as f64).sqrt() } else { 0.0 };
    let right_std = if n_right > 0 { (right_sq / n_right as f64).sqrt() } else { 0.0 };
    let gamma_hat = if left_std > 0.0 && right_std > 0.0 { left_std / right_std } else { 1.0 };
    let mean_abs = abs_sum / n as f64;
    let r_hat = mean_abs * mean_abs / (sq_sum / n as f64);
    let r_hat_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0) / (gamma_hat.powi(2) + 1.0).powi(2);
    let alpha = nearest_alpha(r_hat_norm);
    let scale = (gamma(1.0 / alpha) / gamma(3.0 / alpha)).sqrt();
    let beta_l = left_std * scale;
    let beta_r = right_std * scale;
    let mean_offset = (beta_r - beta_l) * gamma(2.0 / alpha) / gamma(1.0 / alpha);
    Some((AggdParams { alpha, beta_l, beta_r, mean_offset }, n_left, n_right))
}

/// Fits an AGGD to `samples`.
///
/// Requires at least 64 samples that are not all equal and that fall on both
/// sides of zero (both scale parameters must be positive).
pub fn fit_aggd(samples: &[f64]) -> Result<AggdParams, MetricError> {
    if samples.len() < MIN_SAMPLES {
        return Err(MetricError::DegenerateInput(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::DegenerateInput("non-finite sample".into()));
    }
    if samples.iter().all(|&v| v == samples[0]) {
        return Err(MetricError::DegenerateInput("all samples are equal".into()));
    }
    match fit_moments(samples.iter().copied()) {
        Some((params, n_left, n_right)) if n_left > 0 && n_right > 0 => Ok(params),
        Some(_) => Err(MetricError::DegenerateInput("samples lie on one side of zero".into())),
        None => Err(MetricError::DegenerateInput("zero spread".into())),
    }
}

/// Lenient fit used inside NIQE feature extraction: flat or one-sided
/// patches yield the largest grid shape and zero scales instead of an error.
pub(crate) fn fit_aggd_lenient(samples: impl Iterator<Item = f64> + Clone) -> AggdParams {
    fit_moments(samples).map(|(p, _, _)| p).unwrap_or(AggdParams {
        alpha: GRID_START + GRID_STEP * (GRID_LEN - 1) as f64,
        beta_l: 0.0,
        beta_r: 0.0,
        mean_offset: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Normal};

    fn normal_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn laplace_samples(n: usize, seed: u64) -> Vec<f64> {
        // difference of two unit exponentials is Laplace(0, 1)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Exp::new(1.0).unwrap();
        (0..n).map(|_| e.sample(&mut rng) - e.sample(&mut rng)).collect()
    }

    #[test]
    fn ratio_table_is_monotone() {
        let t = ratio_table();
        assert!(t.windows(2).all(|w| w[0].1 < w[1].1));
    }

    #[test]
    fn gaussian_recovers_alpha_two() {
        let p = fit_aggd(&normal_samples(100_000, 1)).unwrap();
        assert!((1.8..=2.2).contains(&p.alpha), "alpha {}", p.alpha);
        assert!((p.beta_l - p.beta_r).abs() / p.beta_l < 0.05);
        // For alpha = 2 the AGGD scale is sigma * sqrt(2).
        assert!((p.beta_l - std::f64::consts::SQRT_2).abs() < 0.05);
    }

    #[test]
    fn laplace_recovers_alpha_one() {
        let p = fit_aggd(&laplace_samples(100_000, 2)).unwrap();
        assert!((0.9..=1.1).contains(&p.alpha), "alpha {}", p.alpha);
    }

    #[test]
    fn scale_equivariance() {
        let x = normal_samples(20_000, 5);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let (a, b) = (fit_aggd(&x).unwrap(), fit_aggd(&x2).unwrap());
        assert!((a.alpha - b.alpha).abs() < 1e-3);
        assert!((b.beta_l / a.beta_l - 2.0).abs() < 0.04);
        assert!((b.beta_r / a.beta_r - 2.0).abs() < 0.04);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_aggd(&[0.3; 100]).is_err());
        assert!(fit_aggd(&[0.0; 100]).is_err());
        assert!(fit_aggd(&normal_samples(10, 1)).is_err());
        let positive: Vec<f64> = normal_samples(200, 3).into_iter().map(f64::abs).collect();
        assert!(fit_aggd(&positive).is_err());
    }

    #[test]
    fn lenient_flat_patch() {
        let p = fit_aggd_lenient(std::iter::repeat_n(0.0, 50));
        assert_eq!(p.beta_l, 0.0);
        assert!(p.alpha.is_finite());
    }
}
