use crate::error::Result;

use super::posterior::LogDensity;

/// Largest per-coordinate discrepancy between the analytic gradient of
/// `target` at `q` and central differences with step `h`, measured as
/// `|g - fd| / max(|g|, |fd|, floor)`.
pub fn max_gradient_error(target: &dyn LogDensity, q: &[f64], h: f64, floor: f64) -> Result<f64> {
    let mut g = vec![0.0; q.len()];
    target.log_density_grad(q, &mut g)?;
    let mut scratch = vec![0.0; q.len()];
    let mut x = q.to_vec();
    let mut worst = 0.0f64;
    for i in 0..q.len() {
        x[i] = q[i] + h;
        let up = target.log_density_grad(&x, &mut scratch)?;
        x[i] = q[i] - h;
        let down = target.log_density_grad(&x, &mut scratch)?;
        x[i] = q[i];
        let fd = (up - down) / (2.0 * h);
        let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(floor);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Wraps a closure as a [`LogDensity`].
pub struct FnDensity<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> LogDensity for FnDensity<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        (self.f)(q, grad)
    }
}
