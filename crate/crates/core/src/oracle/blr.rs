use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, spd_inverse, Matrix};

/// Exact Gaussian posterior of `y = Φ w + noise`, `w ~ N(μ₀, Σ₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlrPosterior {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub noise_variance: f64,
    pub prior_mean: Vec<f64>,
    pub prior_covariance: Matrix,
}

pub fn blr_posterior(
    features: &Matrix,
    targets: &[f64],
    prior_mean: &[f64],
    prior_covariance: &Matrix,
    noise_variance: f64,
) -> Result<BlrPosterior> {
    let d = prior_mean.len();
    if !(noise_variance > 0.0) {
        return Err(Error::config("noise_variance", "must be positive"));
    }
    if prior_covariance.rows() != d || prior_covariance.cols() != d {
        return Err(Error::Shape("prior covariance does not match prior mean".into()));
    }
    if features.rows() != targets.len() || (features.rows() > 0 && features.cols() != d) {
        return Err(Error::Shape("features, targets and prior dimensions disagree".into()));
    }
    let prior_precision = spd_inverse(prior_covariance)?;
    let mut precision = prior_precision.clone();
    let mut rhs = prior_precision.matvec(prior_mean)?;
    for (i, &y) in targets.iter().enumerate() {
        let phi = features.row(i);
        for a in 0..d {
            rhs[a] += phi[a] * y / noise_variance;
            for b in 0..d {
                precision[(a, b)] += phi[a] * phi[b] / noise_variance;
            }
        }
    }
    let covariance = spd_inverse(&precision)?;
    let mean = covariance.matvec(&rhs)?;
    Ok(BlrPosterior {
        mean,
        covariance,
        noise_variance,
        prior_mean: prior_mean.to_vec(),
        prior_covariance: prior_covariance.clone(),
    })
}

impl BlrPosterior {
    /// The MAP estimate, which equals the posterior mean.
    pub fn map(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> Result<Matrix> {
        spd_inverse(&self.covariance)
    }
}

/// Predictive mean `μᵀφ` and variance `φᵀΣφ + σ²` at features `phi`.
pub fn blr_predict(post: &BlrPosterior, phi: &[f64]) -> Result<(f64, f64)> {
    if phi.len() != post.mean.len() {
        return Err(Error::Shape(format!("{} features for a {}-dim posterior", phi.len(), post.mean.len())));
    }
    Ok((dot(&post.mean, phi), post.covariance.quadratic_form(phi)? + post.noise_variance))
}
