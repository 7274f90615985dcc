use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate-wise (or, for `exp_norm`, whole-scope) prior family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `N(0, variance)` per coordinate.
    Gaussian { variance: f64 },
    /// `(1 / 2 scale) exp(-|w| / scale)` per coordinate.
    Laplace { scale: f64 },
    /// Student-t with `dof` degrees of freedom, scaled by `sqrt(scale_sq)`.
    StudentT { dof: f64, scale_sq: f64 },
    /// `exp(-‖w‖^power / 2 variance)` over the whole scope; unnormalized.
    ExpNorm { power: f64, variance: f64 },
}

impl Family {
    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{path}.{name}"), format!("must be positive and finite, got {v}")))
            }
        };
        match *self {
            Family::Gaussian { variance } => positive("variance", variance),
            Family::Laplace { scale } => positive("scale", scale),
            Family::StudentT { dof, scale_sq } => {
                positive("dof", dof)?;
                positive("scale_sq", scale_sq)
            }
            Family::ExpNorm { power, variance } => {
                positive("power", power)?;
                positive("variance", variance)
            }
        }
    }
}

/// Data-dependent or structured prior on the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FirstLayerConfig {
    /// `N(0, αΣ + εI)` per hidden unit over weights and bias, in the
    /// mean-centered input frame.
    EmpCov {
        alpha: f64,
        #[serde(default)]
        eps: Option<f64>,
        #[serde(default = "yes")]
        center: bool,
        #[serde(default)]
        bias_variance: Option<f64>,
    },
    /// `N(0, α V diag(decay^i) Vᵀ + εI)` per hidden unit over weights only.
    PcaDecay {
        alpha: f64,
        #[serde(default)]
        eps: Option<f64>,
        decay: f64,
    },
    /// Gaussian on conv filter weights plus a Laplace factor on each filter sum.
    SumFilter { variance: f64, gamma_sq: f64 },
}

fn yes() -> bool {
    true
}

impl FirstLayerConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{path}.{name}"), format!("must be positive and finite, got {v}")))
            }
        };
        match *self {
            FirstLayerConfig::EmpCov {
                alpha,
                eps,
                bias_variance,
                ..
            } => {
                positive("alpha", alpha)?;
                if let Some(e) = eps {
                    positive("eps", e)?;
                }
                if let Some(b) = bias_variance {
                    positive("bias_variance", b)?;
                }
                Ok(())
            }
            FirstLayerConfig::PcaDecay { alpha, eps, decay } => {
                positive("alpha", alpha)?;
                if let Some(e) = eps {
                    positive("eps", e)?;
                }
                if !(decay > 0.0 && decay <= 1.0) {
                    return Err(Error::config(format!("{path}.decay"), format!("must lie in (0, 1], got {decay}")));
                }
                Ok(())
            }
            FirstLayerConfig::SumFilter { variance, gamma_sq } => {
                positive("variance", variance)?;
                positive("gamma_sq", gamma_sq)
            }
        }
    }
}

/// Default family for every coordinate, optionally overridden on the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub default: Family,
    #[serde(default)]
    pub first_layer: Option<FirstLayerConfig>,
}

impl PriorConfig {
    pub fn gaussian(variance: f64) -> Self {
        PriorConfig {
            default: Family::Gaussian { variance },
            first_layer: None,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        self.default.validate(&format!("{path}.default"))?;
        if let Some(f) = &self.first_layer {
            f.validate(&format!("{path}.first_layer"))?;
        }
        Ok(())
    }
}

/// `ε` used when the config leaves it out: `1e-4 · α`.
pub fn default_eps(alpha: f64) -> f64 {
    1e-4 * alpha
}
