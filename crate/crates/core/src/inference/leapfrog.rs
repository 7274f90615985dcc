use crate::error::Result;
use crate::models::LogDensity;

/// End state of a leapfrog trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    /// `log π` and its gradient at `position`.
    pub log_density: f64,
    pub grad: Vec<f64>,
    /// Set when the target failed or returned a non-finite value mid-way.
    pub diverged: bool,
}

/// Integrates `dq/dt = p`, `dp/dt = ∇ log π(q)` with `steps` leapfrog steps.
/// `grad` must hold `∇ log π(q)` on entry.
pub fn leapfrog(
    target: &dyn LogDensity,
    q: &[f64],
    p: &[f64],
    grad: &[f64],
    log_density: f64,
    step: f64,
    steps: usize,
) -> Trajectory {
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    let mut g = grad.to_vec();
    let mut lp = log_density;
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * step * gi;
        }
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += step * pi;
        }
        match target.log_density_grad(&q, &mut g) {
            Ok(v) if v.is_finite() && g.iter().all(|x| x.is_finite()) => lp = v,
            _ => {
                return Trajectory {
                    position: q,
                    momentum: p,
                    log_density: f64::NEG_INFINITY,
                    grad: g,
                    diverged: true,
                }
            }
        }
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * step * gi;
        }
    }
    Trajectory {
        position: q,
        momentum: p,
        log_density: lp,
        grad: g,
        diverged: false,
    }
}

/// Convenience wrapper that evaluates the starting gradient itself.
pub fn leapfrog_trajectory(
    target: &dyn LogDensity,
    q: &[f64],
    p: &[f64],
    step: f64,
    steps: usize,
) -> Result<Trajectory> {
    let mut g = vec![0.0; q.len()];
    let lp = target.log_density_grad(q, &mut g)?;
    Ok(leapfrog(target, q, p, &g, lp, step, steps))
}
