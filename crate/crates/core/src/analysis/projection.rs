use serde::{Deserialize, Serialize};

use crate::analysis::stats::{prior_match_test, MatchResult, MatchThresholds, PriorMarginal, REFERENCE_DRAWS};
use crate::error::{Error, Result};
use crate::models::{FirstLayerView, Layout};
use crate::numkit::RngStream;
use crate::priors::Prior;

/// A direction in first-layer input space, optionally with a trailing bias
/// coefficient: `Σ_i v_i w_ij + v_bias b_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDirection {
    pub label: String,
    pub vector: Vec<f64>,
}

impl ProbeDirection {
    /// The statistic `Σ c_i w_ij - c0 b_j` for a planted `c · x = c0`.
    pub fn affine(label: impl Into<String>, c: &[f64], c0: f64) -> Self {
        let mut vector = c.to_vec();
        vector.push(-c0);
        ProbeDirection {
            label: label.into(),
            vector,
        }
    }
}

/// One row per probe direction; projections of all hidden units are pooled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub label: String,
    pub units: usize,
    #[serde(flatten)]
    pub test: MatchResult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub directions: Vec<DirectionReport>,
}

impl ProjectionReport {
    pub fn all_pass(&self) -> bool {
        !self.directions.is_empty() && self.directions.iter().all(|d| d.test.pass)
    }
}

/// `series[unit][sample]` of first-layer projections onto `direction`.
pub fn first_layer_projections(layout: &Layout, samples: &[Vec<f64>], direction: &[f64]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = samples.first() else {
        return Err(Error::config("samples", "no parameter samples to project"));
    };
    let units = FirstLayerView::new(layout, first).units();
    let mut series = vec![Vec::with_capacity(samples.len()); units];
    for w in samples {
        if w.len() != layout.len() {
            return Err(Error::Shape(format!(
                "sample has {} parameters, layout has {}",
                w.len(),
                layout.len()
            )));
        }
        let view = FirstLayerView::new(layout, w);
        for (u, s) in series.iter_mut().enumerate() {
            s.push(view.project(u, direction)?);
        }
    }
    Ok(series)
}

/// Reference marginal of the projection under `prior`, from at least
/// [`REFERENCE_DRAWS`] pooled unit projections of fresh prior samples.
pub fn prior_projection_marginal(prior: &Prior, direction: &[f64], rng: &mut RngStream) -> Result<PriorMarginal> {
    let layout = prior.layout();
    let probe = prior.sample(rng);
    let units = FirstLayerView::new(layout, &probe).units();
    let draws_needed = REFERENCE_DRAWS.div_ceil(units);
    let samples: Vec<Vec<f64>> = (0..draws_needed).map(|_| prior.sample(rng)).collect();
    let pooled: Vec<f64> = first_layer_projections(layout, &samples, direction)?.concat();
    let mut marginal = PriorMarginal::from_draws(pooled);
    if let Some(v) = prior.first_layer_projection_variance(direction) {
        marginal.mean = 0.0;
        marginal.variance = v;
    }
    Ok(marginal)
}

/// Prior-match report of `samples` along each probe direction.
pub fn project_first_layer(
    prior: &Prior,
    samples: &[Vec<f64>],
    probes: &[ProbeDirection],
    thresholds: &MatchThresholds,
    rng: &mut RngStream,
) -> Result<ProjectionReport> {
    let layout = prior.layout();
    let mut directions = Vec::with_capacity(probes.len());
    for probe in probes {
        let series = first_layer_projections(layout, samples, &probe.vector)?;
        let marginal = prior_projection_marginal(prior, &probe.vector, rng)?;
        directions.push(DirectionReport {
            label: probe.label.clone(),
            units: series.len(),
            test: prior_match_test(&series, &marginal, thresholds)?,
        });
    }
    Ok(ProjectionReport { directions })
}

/// Largest `|projection|` over units of a single parameter vector.
pub fn max_abs_projection(layout: &Layout, params: &[f64], direction: &[f64]) -> Result<f64> {
    let view = FirstLayerView::new(layout, params);
    let mut worst = 0.0f64;
    for u in 0..view.units() {
        worst = worst.max(view.project(u, direction)?.abs());
    }
    Ok(worst)
}
