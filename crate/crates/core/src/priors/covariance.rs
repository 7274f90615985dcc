use std::f64::consts::PI;
use std::path::Path;

use crate::analysis::{empirical_covariance, pca_from_covariance, PcaBasis};
use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::numkit::{cholesky, dot, eigh_symmetric, solve_lower, solve_lower_transpose, Matrix, RngStream};

const SIDECAR_MAGIC: &[u8; 8] = b"SLCOVPR1";

/// Zero-mean Gaussian over one hidden unit's incoming weights `w`, optionally
/// joined by its bias.
///
/// With a bias the density is defined in the centered input frame:
/// `w ~ N(0, C)` and `b + mean·w ~ N(0, bias_variance)`, which is the raw-frame
/// image of independent centered-frame weight and bias (unit Jacobian).
#[derive(Clone, Debug, PartialEq)]
pub struct CovariancePrior {
    /// Input mean the frame is centered on (zeros when centering is off).
    pub mean: Vec<f64>,
    /// Lower-triangular factor of `C`.
    pub factor: Matrix,
    /// Eigenvalues of `C`, descending.
    pub spectrum: Vec<f64>,
    pub bias_variance: Option<f64>,
    pub alpha: f64,
    pub eps: f64,
}

impl CovariancePrior {
    /// Builds from an explicit covariance `C`.
    pub fn from_covariance(cov: &Matrix, mean: Vec<f64>, bias_variance: Option<f64>, alpha: f64, eps: f64) -> Result<Self> {
        if mean.len() != cov.rows() {
            return Err(Error::Shape("mean and covariance dimensions differ".into()));
        }
        let factor = cholesky(cov)?;
        let spectrum = eigh_symmetric(cov, 1e-9)?.values;
        Ok(CovariancePrior {
            mean,
            factor,
            spectrum,
            bias_variance,
            alpha,
            eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn has_bias(&self) -> bool {
        self.bias_variance.is_some()
    }

    pub fn covariance(&self) -> Matrix {
        self.factor.matmul(&self.factor.transpose()).expect("square factor")
    }

    /// Variance of `direction · w`.
    pub fn weight_variance_along(&self, direction: &[f64]) -> Result<f64> {
        let lt = self.factor.t_matvec(direction)?;
        Ok(dot(&lt, &lt))
    }

    /// `sqrt(mean eigenvalue)`: a single scale for trajectory lengths.
    pub fn scale_hint(&self) -> f64 {
        (self.spectrum.iter().sum::<f64>() / self.dim() as f64).sqrt()
    }

    /// Log density of one unit and its gradient (added into `gw`, `gb`).
    pub fn unit_logpdf_grad(&self, w: &[f64], b: Option<f64>, gw: &mut [f64], gb: Option<&mut f64>) -> Result<f64> {
        let d = self.dim();
        let y = solve_lower(&self.factor, w)?;
        let x = solve_lower_transpose(&self.factor, &y)?;
        let log_det: f64 = (0..d).map(|i| self.factor[(i, i)].ln()).sum();
        let mut lp = -0.5 * d as f64 * (2.0 * PI).ln() - log_det - 0.5 * dot(&y, &y);
        for (g, v) in gw.iter_mut().zip(&x) {
            *g -= v;
        }
        if let (Some(var), Some(b)) = (self.bias_variance, b) {
            let r = b + dot(&self.mean, w);
            lp += -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var);
            let k = r / var;
            if let Some(gb) = gb {
                *gb -= k;
            }
            for (g, mu) in gw.iter_mut().zip(&self.mean) {
                *g -= k * mu;
            }
        }
        Ok(lp)
    }

    /// Exact draw of `(w, b)`; `b` is `None` without a bias coordinate.
    pub fn sample_unit(&self, rng: &mut RngStream) -> (Vec<f64>, Option<f64>) {
        let z = rng.normal_vec(self.dim());
        let w = self.factor.matvec(&z).expect("factor dimension");
        let b = self
            .bias_variance
            .map(|var| var.sqrt() * rng.normal() - dot(&self.mean, &w));
        (w, b)
    }

    /// Little-endian sidecar: magic, `u64` dim, `u64` bias flag, then
    /// `alpha, eps, bias_variance`, mean, factor (row-major), spectrum.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(8 * (6 + 2 * d + d * d));
        out.extend_from_slice(SIDECAR_MAGIC);
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.extend_from_slice(&u64::from(self.has_bias()).to_le_bytes());
        for v in [self.alpha, self.eps, self.bias_variance.unwrap_or(0.0)]
            .iter()
            .chain(&self.mean)
            .chain(self.factor.data())
            .chain(&self.spectrum)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != SIDECAR_MAGIC {
            return Err(Error::format(0, "bad covariance sidecar magic"));
        }
        let d = r.u64()?;
        let flag = r.u64()?;
        if flag > 1 {
            return Err(Error::format(16, format!("bias flag must be 0 or 1, got {flag}")));
        }
        let expected = (d as u128) * (d as u128) + 2 * d as u128 + 3;
        if expected * 8 != (bytes.len() - 24) as u128 {
            return Err(Error::format(
                24,
                format!("dimension {d} needs {} payload bytes, found {}", expected * 8, bytes.len() - 24),
            ));
        }
        let d = d as usize;
        let alpha = r.f64()?;
        let eps = r.f64()?;
        let bias = r.f64()?;
        let mean = r.f64s(d)?;
        let factor_offset = r.pos;
        let factor = Matrix::from_vec(d, d, r.f64s(d * d)?).map_err(|e| Error::format(factor_offset, e.to_string()))?;
        let spectrum = r.f64s(d)?;
        if mean.iter().chain(&spectrum).chain(&[alpha, eps, bias]).any(|v| !v.is_finite()) {
            return Err(Error::format(24, "non-finite value in covariance sidecar"));
        }
        for i in 0..d {
            if !(factor[(i, i)] > 0.0) {
                return Err(Error::format(factor_offset + 8 * (i * d + i), "factor diagonal must be positive"));
            }
            if (i + 1..d).any(|j| factor[(i, j)] != 0.0) {
                return Err(Error::format(factor_offset + 8 * i * d, "factor is not lower triangular"));
            }
        }
        Ok(CovariancePrior {
            mean,
            factor,
            spectrum,
            bias_variance: (flag == 1).then_some(bias),
            alpha,
            eps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn centered_stats(inputs: &Matrix, center: bool) -> Result<(Vec<f64>, Matrix)> {
    let (mean, cov) = empirical_covariance(inputs)?;
    if center {
        return Ok((mean, cov));
    }
    // raw second moment with the same n - 1 normalization
    let n = inputs.rows() as f64;
    let mut m2 = cov;
    for a in 0..mean.len() {
        for b in 0..mean.len() {
            m2[(a, b)] += mean[a] * mean[b] * n / (n - 1.0);
        }
    }
    Ok((vec![0.0; mean.len()], m2))
}

/// `N(0, αΣ + εI)` from the rows of `inputs` (flat inputs or patches). The
/// bias joins through the centered frame with variance `bias_variance`
/// (default `α + ε`).
pub fn build_empcov(
    inputs: &Matrix,
    alpha: f64,
    eps: f64,
    center: bool,
    bias_variance: Option<f64>,
    with_bias: bool,
) -> Result<CovariancePrior> {
    if inputs.rows() < 2 {
        return Err(Error::config("dataset", "emp_cov needs at least 2 training rows"));
    }
    let (mean, sigma) = centered_stats(inputs, center)?;
    let cov = sigma.scale(alpha).add_diag(eps);
    let bias = with_bias.then(|| bias_variance.unwrap_or(alpha + eps));
    CovariancePrior::from_covariance(&cov, mean, bias, alpha, eps)
}

/// `N(0, α V diag(s) Vᵀ + εI)` for explicit component variances `s`.
pub fn covariance_from_spectrum(basis: &PcaBasis, strengths: &[f64], alpha: f64, eps: f64) -> Result<Matrix> {
    let d = basis.dim();
    if strengths.len() != d {
        return Err(Error::Shape(format!("{} strengths for {d} components", strengths.len())));
    }
    let mut cov = Matrix::zeros(d, d);
    for (i, s) in strengths.iter().enumerate() {
        let v = basis.component(i);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += alpha * s * v[a] * v[b];
            }
        }
    }
    Ok(cov.add_diag(eps))
}

/// PCA-decay prior: variance `α decay^i + ε` along the i-th data component
/// (i counted from 1, strongest first). Weights only.
pub fn build_pca_prior(inputs: &Matrix, alpha: f64, eps: f64, decay: f64) -> Result<CovariancePrior> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::config("decay", format!("must lie in (0, 1], got {decay}")));
    }
    let (mean, sigma) = empirical_covariance(inputs)?;
    let basis = pca_from_covariance(mean, &sigma)?;
    let strengths: Vec<f64> = (1..=basis.dim()).map(|i| decay.powi(i as i32)).collect();
    let cov = covariance_from_spectrum(&basis, &strengths, alpha, eps)?;
    let d = basis.dim();
    CovariancePrior::from_covariance(&cov, vec![0.0; d], None, alpha, eps)
}
