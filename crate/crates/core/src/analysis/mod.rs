//! Covariance, PCA, projection diagnostics and predictive metrics.

mod covariance;
mod limits;
mod metrics;
mod projection;
mod robustness;
mod stats;

pub use covariance::{empirical_covariance, pca, pca_from_covariance, PcaBasis};
pub use limits::{is_separable, limiting_logits};
pub use metrics::{classification_metrics, evaluate, predictive_probs, MetricBundle, Predictor, ECE_BINS};
pub use projection::{
    first_layer_projections, max_abs_projection, prior_projection_marginal, project_first_layer, DirectionReport,
    ProbeDirection, ProjectionReport,
};
pub use robustness::{corruption_spectrum, robustness_curve, RobustnessRow, SpectrumRow};
pub use stats::{
    effective_sample_size, ks_two_sample, mean, prior_match_test, variance, MatchResult, MatchThresholds,
    PriorMarginal, MIN_MATCH_SAMPLES, REFERENCE_DRAWS,
};

#[cfg(test)]
mod tests;
