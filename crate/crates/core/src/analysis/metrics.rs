use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{argmax, bma_predict};
use crate::models::{LabeledDataset, Model};
use crate::numkit::Matrix;

pub const ECE_BINS: usize = 15;
/// Probabilities are floored here before taking logs so a confident miss
/// costs a large but finite amount.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub nll: f64,
    pub ece: f64,
    pub bins: usize,
}

/// What produces predictive probabilities.
#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    /// Average of link outputs over parameter samples (posterior chain or ensemble).
    Average(&'a [Vec<f64>]),
    Point(&'a [f64]),
}

pub fn predictive_probs(model: &Model, predictor: Predictor<'_>, inputs: &Matrix) -> Result<Matrix> {
    Ok(match predictor {
        Predictor::Average(samples) => bma_predict(model, samples, inputs)?.mean,
        Predictor::Point(w) => bma_predict(model, std::slice::from_ref(&w.to_vec()), inputs)?.mean,
    })
}

/// Accuracy, mean negative log-likelihood and equal-width-bin ECE of class
/// probabilities (one row per input).
pub fn classification_metrics(probs: &Matrix, labels: &[usize]) -> Result<MetricBundle> {
    let n = probs.rows();
    if n == 0 || labels.len() != n {
        return Err(Error::Shape(format!("{n} probability rows for {} labels", labels.len())));
    }
    let mut correct = 0usize;
    let mut nll = 0.0;
    let mut bin_count = [0usize; ECE_BINS];
    let mut bin_conf = [0.0f64; ECE_BINS];
    let mut bin_hits = [0usize; ECE_BINS];
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.row(i);
        if y >= p.len() {
            return Err(Error::Shape(format!("label {y} but only {} classes", p.len())));
        }
        let guess = argmax(p);
        let conf = p[guess];
        let hit = guess == y;
        correct += usize::from(hit);
        nll -= p[y].max(PROB_FLOOR).ln();
        let b = ((conf * ECE_BINS as f64) as usize).min(ECE_BINS - 1);
        bin_count[b] += 1;
        bin_conf[b] += conf;
        bin_hits[b] += usize::from(hit);
    }
    let ece = (0..ECE_BINS)
        .filter(|&b| bin_count[b] > 0)
        .map(|b| (bin_hits[b] as f64 - bin_conf[b]).abs() / n as f64)
        .sum();
    Ok(MetricBundle {
        accuracy: correct as f64 / n as f64,
        nll: nll / n as f64,
        ece,
        bins: ECE_BINS,
    })
}

pub fn evaluate(model: &Model, predictor: Predictor<'_>, data: &LabeledDataset) -> Result<MetricBundle> {
    let labels = data
        .classes()
        .ok_or_else(|| Error::Shape("classification metrics need class labels".into()))?;
    classification_metrics(&predictive_probs(model, predictor, &data.inputs)?, labels)
}
