use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{LabeledDataset, Model};
use crate::numkit::Matrix;
use crate::priors::Prior;

pub const MAX_GRID_PARAMS: usize = 3;
pub const MAX_AXIS_NODES: usize = 401;

/// Brute-force posterior on a tensor grid of at most three parameters.
#[derive(Clone, Debug)]
pub struct GridPosterior {
    pub axes: Vec<Vec<f64>>,
    /// Unnormalized log density per node, row-major over `axes`.
    pub log_density: Vec<f64>,
    /// Density normalized so its trapezoid integral is 1.
    pub density: Vec<f64>,
    /// `log ∫ exp(log_density)` by the trapezoid rule.
    pub log_normalizer: f64,
}

/// Trapezoid weights of a sorted axis.
pub fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { axis[0] } else { axis[i - 1] };
            let hi = if i + 1 == n { axis[n - 1] } else { axis[i + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}

pub fn uniform_axis(lo: f64, hi: f64, nodes: usize) -> Vec<f64> {
    (0..nodes)
        .map(|i| lo + (hi - lo) * i as f64 / (nodes - 1) as f64)
        .collect()
}

/// Evaluates `log p(D|w) + log p(w)` at every node `w = rotation · u`
/// (`rotation` orthogonal, identity when absent), with `u` on the grid.
pub fn grid_posterior(
    model: &Model,
    prior: &Prior,
    data: Option<&LabeledDataset>,
    axes: Vec<Vec<f64>>,
    rotation: Option<&Matrix>,
) -> Result<GridPosterior> {
    let d = model.num_params();
    if d > MAX_GRID_PARAMS {
        return Err(Error::config("grids", format!("grid oracle handles at most {MAX_GRID_PARAMS} parameters, model has {d}")));
    }
    if axes.len() != d {
        return Err(Error::config("grids", format!("{} axes for {d} parameters", axes.len())));
    }
    for (i, a) in axes.iter().enumerate() {
        if a.len() < 2 || a.len() > MAX_AXIS_NODES || a.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::config(
                format!("grids[{i}]"),
                format!("axis needs 2..={MAX_AXIS_NODES} strictly increasing nodes"),
            ));
        }
    }
    if let Some(r) = rotation {
        let rtr = r.transpose().matmul(r)?;
        if r.rows() != d || rtr.sub(&Matrix::identity(d))?.frobenius() > 1e-10 {
            return Err(Error::config("rotation", "must be a square orthogonal matrix"));
        }
    }
    let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let log_density = (0..total)
        .into_par_iter()
        .map(|flat| {
            let u = node(&axes, &sizes, flat);
            let w = match rotation {
                Some(r) => r.matvec(&u).expect("checked dimension"),
                None => u,
            };
            let ll = match data {
                Some(data) => model.log_likelihood(&w, data)?,
                None => 0.0,
            };
            Ok(ll + prior.log_density(&w)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let weights: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    let peak = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (flat, lv) in log_density.iter().enumerate() {
        z += node_weight(&weights, &sizes, flat) * (lv - peak).exp();
    }
    let density = log_density.iter().map(|lv| (lv - peak).exp() / z).collect();
    Ok(GridPosterior {
        axes,
        log_density,
        density,
        log_normalizer: peak + z.ln(),
    })
}

fn unravel(sizes: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        idx[k] = flat % sizes[k];
        flat /= sizes[k];
    }
    idx
}

fn node(axes: &[Vec<f64>], sizes: &[usize], flat: usize) -> Vec<f64> {
    unravel(sizes, flat).iter().zip(axes).map(|(&i, a)| a[i]).collect()
}

fn node_weight(weights: &[Vec<f64>], sizes: &[usize], flat: usize) -> f64 {
    unravel(sizes, flat).iter().zip(weights).map(|(&i, w)| w[i]).product()
}

impl GridPosterior {
    fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Marginal density along `axis`, integrating the others by trapezoid.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let sizes = self.sizes();
        let weights: Vec<Vec<f64>> = self.axes.iter().map(|a| trapezoid_weights(a)).collect();
        let mut out = vec![0.0; sizes[axis]];
        for (flat, p) in self.density.iter().enumerate() {
            let idx = unravel(&sizes, flat);
            let w: f64 = idx
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != axis)
                .map(|(k, &i)| weights[k][i])
                .product();
            out[idx[axis]] += w * p;
        }
        out
    }

    /// Posterior mean of every grid coordinate.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.axes.len())
            .map(|a| {
                let m = self.marginal(a);
                let w = trapezoid_weights(&self.axes[a]);
                m.iter().zip(&w).zip(&self.axes[a]).map(|((p, w), x)| p * w * x).sum()
            })
            .collect()
    }
}

/// Density `f` on `axis` normalized by the trapezoid rule on that axis.
pub fn normalized_on_axis(axis: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let vals: Vec<f64> = axis.iter().map(|&x| f(x)).collect();
    let z: f64 = vals.iter().zip(trapezoid_weights(axis)).map(|(v, w)| v * w).sum();
    vals.into_iter().map(|v| v / z).collect()
}

/// Orthogonal matrix whose first column is the unit vector `direction`
/// (Householder reflection).
pub fn rotation_with_first_column(direction: &[f64]) -> Result<Matrix> {
    let d = direction.len();
    let n = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::config("direction", "must be non-zero"));
    }
    let p: Vec<f64> = direction.iter().map(|v| v / n).collect();
    // H = I - 2 v vᵀ / vᵀv with v = e1 - p maps e1 to p
    let mut v = p.iter().map(|x| -x).collect::<Vec<_>>();
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut h = Matrix::identity(d);
    if vv > 1e-300 {
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] -= 2.0 * v[a] * v[b] / vv;
            }
        }
    }
    Ok(h)
}
