use serde::{Deserialize, Serialize};

use crate::analysis::metrics::{evaluate, MetricBundle, Predictor};
use crate::analysis::stats::variance;
use crate::analysis::PcaBasis;
use crate::data::{corrupt, CorruptionSpec};
use crate::error::{Error, Result};
use crate::models::{LabeledDataset, Model};
use crate::numkit::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub magnitude: f64,
    pub predictor: String,
    #[serde(flatten)]
    pub metrics: MetricBundle,
}

/// Metrics of every predictor on `clean` corrupted by `family` at each
/// magnitude. All predictors see the same corrupted inputs; magnitude 0 is the
/// clean data itself.
pub fn robustness_curve(
    model: &Model,
    predictors: &[(String, Predictor<'_>)],
    clean: &LabeledDataset,
    family: &CorruptionSpec,
    magnitudes: &[f64],
    basis: Option<&PcaBasis>,
    rng: &RngStream,
) -> Result<Vec<RobustnessRow>> {
    if magnitudes.first() != Some(&0.0) {
        return Err(Error::config("magnitudes", "must start at 0"));
    }
    if magnitudes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("magnitudes", "must be strictly increasing"));
    }
    let mut rows = Vec::with_capacity(magnitudes.len() * predictors.len());
    for (i, &m) in magnitudes.iter().enumerate() {
        let data = if m == 0.0 {
            clean.clone()
        } else {
            corrupt(clean, &family.with_magnitude(m), basis, &mut rng.derive(i as u64))?
        };
        for (name, p) in predictors {
            rows.push(RobustnessRow {
                magnitude: m,
                predictor: name.clone(),
                metrics: evaluate(model, *p, &data)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub component: usize,
    /// Variance of the basis' own data along the component.
    pub reference: f64,
    pub before: f64,
    pub after: f64,
}

/// Variance of clean and corrupted rows along each basis component.
pub fn corruption_spectrum(clean: &Matrix, corrupted: &Matrix, basis: &PcaBasis) -> Result<Vec<SpectrumRow>> {
    if clean.rows() != corrupted.rows() || clean.cols() != corrupted.cols() {
        return Err(Error::Shape(format!(
            "clean {}x{} vs corrupted {}x{}",
            clean.rows(),
            clean.cols(),
            corrupted.rows(),
            corrupted.cols()
        )));
    }
    if clean.cols() != basis.dim() {
        return Err(Error::Shape(format!(
            "basis has dimension {}, rows have {}",
            basis.dim(),
            clean.cols()
        )));
    }
    if clean.rows() < 2 {
        return Err(Error::config("inputs", "spectrum needs at least 2 rows"));
    }
    let coords = |m: &Matrix| -> Vec<Vec<f64>> { (0..m.rows()).map(|i| basis.project(m.row(i))).collect() };
    let (a, b) = (coords(clean), coords(corrupted));
    Ok((0..basis.dim())
        .map(|k| {
            let col = |c: &[Vec<f64>]| c.iter().map(|r| r[k]).collect::<Vec<_>>();
            SpectrumRow {
                component: k,
                reference: basis.variances[k],
                before: variance(&col(&a)),
                after: variance(&col(&b)),
            }
        })
        .collect())
}
