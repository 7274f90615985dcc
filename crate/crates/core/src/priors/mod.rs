//! Prior families, data-dependent first-layer priors and exact samplers.

mod config;
mod covariance;
mod family;
mod prior;
mod sumfilter;

pub use config::{default_eps, Family, FirstLayerConfig, PriorConfig};
pub use covariance::{build_empcov, build_pca_prior, covariance_from_spectrum, CovariancePrior};
pub use family::{exp_norm_logpdf_grad, sample_exp_norm};
pub use prior::{build_sumfilter, first_layer_rows, Prior};
pub use sumfilter::{sample_filter, sample_tilted_half_normal};


#[cfg(test)]
mod tests;
