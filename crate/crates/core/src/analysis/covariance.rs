use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{eigh_symmetric, Matrix};

/// Column means and the unbiased (`n - 1`) covariance of the rows of `inputs`.
pub fn empirical_covariance(inputs: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let (n, m) = (inputs.rows(), inputs.cols());
    if n < 2 {
        return Err(Error::config("inputs", format!("covariance needs at least 2 rows, got {n}")));
    }
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (acc, v) in mean.iter_mut().zip(inputs.row(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut cov = Matrix::zeros(m, m);
    let mut centered = vec![0.0; m];
    for i in 0..n {
        for ((c, v), mu) in centered.iter_mut().zip(inputs.row(i)).zip(&mean) {
            *c = v - mu;
        }
        for a in 0..m {
            if centered[a] == 0.0 {
                continue;
            }
            let row = cov.row_mut(a);
            for b in a..m {
                row[b] += centered[a] * centered[b];
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for a in 0..m {
        for b in a..m {
            let v = cov[(a, b)] * scale;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((mean, cov))
}

/// Principal axes of a dataset, strongest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Columns are unit-norm principal directions.
    pub components: Matrix,
    pub variances: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.components.column(i)
    }

    /// Indices of the `k` lowest-variance components, lowest first.
    pub fn lowest(&self, k: usize) -> Vec<usize> {
        (0..self.dim()).rev().take(k).collect()
    }

    pub fn highest(&self, k: usize) -> Vec<usize> {
        (0..self.dim().min(k)).collect()
    }

    /// Coordinates of `x - mean` in the basis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.components.t_matvec(&centered).expect("basis dimension")
    }
}

pub fn pca(inputs: &Matrix) -> Result<PcaBasis> {
    let (mean, cov) = empirical_covariance(inputs)?;
    pca_from_covariance(mean, &cov)
}

pub fn pca_from_covariance(mean: Vec<f64>, cov: &Matrix) -> Result<PcaBasis> {
    if mean.len() != cov.rows() {
        return Err(Error::Shape(format!(
            "mean has {} entries, covariance is {}x{}",
            mean.len(),
            cov.rows(),
            cov.cols()
        )));
    }
    let eig = eigh_symmetric(cov, 1e-10)?;
    Ok(PcaBasis {
        mean,
        components: eig.vectors,
        variances: eig.values.into_iter().map(|v| v.max(0.0)).collect(),
    })
}
