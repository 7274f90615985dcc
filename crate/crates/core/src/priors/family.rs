use std::f64::consts::PI;

use rand_distr::{Distribution, Gamma, StudentT};

use crate::numkit::{ln_gamma, RngStream};

use super::config::Family;

impl Family {
    /// `log p(w)` for one coordinate and its derivative. Not meaningful for
    /// `ExpNorm`, which couples the whole scope.
    pub fn scalar_logpdf_grad(&self, w: f64) -> (f64, f64) {
        match *self {
            Family::Gaussian { variance } => (
                -0.5 * (2.0 * PI * variance).ln() - w * w / (2.0 * variance),
                -w / variance,
            ),
            Family::Laplace { scale } => (-(2.0 * scale).ln() - w.abs() / scale, -sign(w) / scale),
            Family::StudentT { dof, scale_sq } => {
                let norm = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI * scale_sq).ln();
                let q = dof * scale_sq;
                (
                    norm - 0.5 * (dof + 1.0) * (w * w / q).ln_1p(),
                    -(dof + 1.0) * w / (q + w * w),
                )
            }
            Family::ExpNorm { .. } => unreachable!("exp_norm is evaluated over its whole scope"),
        }
    }

    pub fn sample_scalar(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Family::Gaussian { variance } => variance.sqrt() * rng.normal(),
            Family::Laplace { scale } => {
                let u = rng.uniform() - 0.5;
                -scale * sign(u) * (1.0 - 2.0 * u.abs()).ln()
            }
            Family::StudentT { dof, scale_sq } => {
                let t = StudentT::new(dof).expect("validated dof");
                scale_sq.sqrt() * t.sample(rng)
            }
            Family::ExpNorm { .. } => unreachable!("exp_norm is sampled over its whole scope"),
        }
    }

    /// Marginal standard deviation of one coordinate in a scope of `dim`
    /// coordinates (infinite for heavy-tailed Student-t).
    pub fn marginal_std(&self, dim: usize) -> f64 {
        match *self {
            Family::Gaussian { variance } => variance.sqrt(),
            Family::Laplace { scale } => std::f64::consts::SQRT_2 * scale,
            Family::StudentT { dof, scale_sq } => {
                if dof > 2.0 {
                    (scale_sq * dof / (dof - 2.0)).sqrt()
                } else {
                    f64::INFINITY
                }
            }
            Family::ExpNorm { power, variance } => {
                // E‖w‖² = (2α²)^{2/p} Γ((d+2)/p) / Γ(d/p), shared by d coordinates
                let d = dim.max(1) as f64;
                let log_e = (2.0 / power) * (2.0 * variance).ln() + ln_gamma((d + 2.0) / power) - ln_gamma(d / power);
                (log_e.exp() / d).sqrt()
            }
        }
    }

    /// Scale used by the trajectory-length rule: the marginal std where finite,
    /// otherwise the scale parameter.
    pub fn scale_hint(&self, dim: usize) -> f64 {
        let s = self.marginal_std(dim);
        if s.is_finite() {
            s
        } else if let Family::StudentT { scale_sq, .. } = *self {
            scale_sq.sqrt()
        } else {
            1.0
        }
    }
}

#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `-‖w‖^p / 2α²` and its gradient (taken as 0 at the origin).
pub fn exp_norm_logpdf_grad(power: f64, variance: f64, w: &[f64], grad: &mut [f64]) -> f64 {
    let norm_sq: f64 = w.iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return 0.0;
    }
    let norm = norm_sq.sqrt();
    let scale = power / (2.0 * variance) * norm.powf(power - 2.0);
    for (g, x) in grad.iter_mut().zip(w) {
        *g -= scale * x;
    }
    -norm.powf(power) / (2.0 * variance)
}

/// Exact draw: radius `(2α² G)^{1/p}` with `G ~ Gamma(d/p, 1)`, uniform direction.
pub fn sample_exp_norm(power: f64, variance: f64, dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let g = Gamma::new(dim as f64 / power, 1.0).expect("positive shape");
    let radius = (2.0 * variance * g.sample(rng)).powf(1.0 / power);
    let mut dir = rng.normal_vec(dim);
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        dir.iter_mut().for_each(|v| *v *= radius / n);
    }
    dir
}
