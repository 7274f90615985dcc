use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::numkit::Matrix;

/// Per-input mean of link outputs over a parameter set, plus their variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub mean: Matrix,
    pub variance: Matrix,
}

impl Predictive {
    /// Argmax of the averaged probabilities.
    pub fn decisions(&self) -> Vec<usize> {
        (0..self.mean.rows()).map(|i| argmax(self.mean.row(i))).collect()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Model average over `samples` at each row of `inputs`.
pub fn bma_predict(model: &Model, samples: &[Vec<f64>], inputs: &Matrix) -> Result<Predictive> {
    if samples.is_empty() {
        return Err(Error::config("samples", "prediction needs at least one parameter sample"));
    }
    // link output width: 2 for the logistic link, the output count otherwise
    let k = model.spec().classes();
    let n = inputs.rows();
    let mut sum = Matrix::zeros(n, k);
    let mut sq = Matrix::zeros(n, k);
    for w in samples {
        for i in 0..n {
            let out = model.forward(w, inputs.row(i))?;
            for (j, v) in out.iter().enumerate() {
                sum[(i, j)] += v;
                sq[(i, j)] += v * v;
            }
        }
    }
    let s = samples.len() as f64;
    let mean = sum.scale(1.0 / s);
    let mut variance = Matrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            let m = mean[(i, j)];
            variance[(i, j)] = (sq[(i, j)] / s - m * m).max(0.0);
        }
    }
    if mean.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite predictive mean".into()));
    }
    Ok(Predictive { mean, variance })
}
