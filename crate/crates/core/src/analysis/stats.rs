use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::RngStream;

/// Minimum pooled sample count for [`prior_match_test`].
pub const MIN_MATCH_SAMPLES: usize = 30;
/// Fresh prior draws used as the KS reference.
pub const REFERENCE_DRAWS: usize = 10_000;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Effective sample size of one chain by Geyer's initial monotone sequence,
/// capped at the chain length.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |t: usize| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0);
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        k += 1;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64)
}

/// Marginal of a scalar statistic under the prior: its mean, variance and a
/// reference sample for distributional comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMarginal {
    pub mean: f64,
    pub variance: f64,
    pub draws: Vec<f64>,
}

impl PriorMarginal {
    /// Moments estimated from the draws themselves.
    pub fn from_draws(draws: Vec<f64>) -> Self {
        PriorMarginal {
            mean: mean(&draws),
            variance: variance(&draws),
            draws,
        }
    }

    pub fn gaussian(mean: f64, variance: f64, rng: &mut RngStream) -> Self {
        let sd = variance.sqrt();
        PriorMarginal {
            mean,
            variance,
            draws: (0..REFERENCE_DRAWS).map(|_| mean + sd * rng.normal()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MatchThresholds {
    pub max_abs_z: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub max_ks: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        MatchThresholds {
            max_abs_z: 3.0,
            ratio_low: 0.85,
            ratio_high: 1.15,
            max_ks: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub samples: usize,
    pub effective_samples: f64,
    pub mean: f64,
    pub variance: f64,
    pub prior_variance: f64,
    pub z: f64,
    pub variance_ratio: f64,
    pub ks: f64,
    pub pass: bool,
}

/// Tests whether pooled `series` (one autocorrelated series per unit) look like
/// draws from `prior`. The mean's standard error uses the summed effective
/// sample size of the series.
pub fn prior_match_test(series: &[Vec<f64>], prior: &PriorMarginal, th: &MatchThresholds) -> Result<MatchResult> {
    let pooled: Vec<f64> = series.iter().flatten().copied().collect();
    if pooled.len() < MIN_MATCH_SAMPLES {
        return Err(Error::config(
            "samples",
            format!("prior match needs at least {MIN_MATCH_SAMPLES} samples, got {}", pooled.len()),
        ));
    }
    if prior.draws.is_empty() || !(prior.variance > 0.0) {
        return Err(Error::config("prior", "reference marginal needs draws and positive variance"));
    }
    let ess: f64 = series.iter().map(|s| effective_sample_size(s)).sum();
    let m = mean(&pooled);
    let v = variance(&pooled);
    let z = (m - prior.mean) / (v.max(1e-300) / ess).sqrt();
    let ratio = v / prior.variance;
    let ks = ks_two_sample(&pooled, &prior.draws);
    let pass = z.abs() < th.max_abs_z && ratio >= th.ratio_low && ratio <= th.ratio_high && ks < th.max_ks;
    Ok(MatchResult {
        samples: pooled.len(),
        effective_samples: ess,
        mean: m,
        variance: v,
        prior_variance: prior.variance,
        z,
        variance_ratio: ratio,
        ks,
        pass,
    })
}
