use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network family and its shape parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// Fully connected; `widths = [inputs, hidden.., outputs]`.
    Mlp { widths: Vec<usize> },
    /// One stride-1 convolution over `height x width x channels` images,
    /// optional 2x2 average pooling, then a dense head.
    Cnn {
        height: usize,
        width: usize,
        channels: usize,
        kernel: usize,
        filters: usize,
        #[serde(default)]
        padding: bool,
        #[serde(default)]
        pool: bool,
        #[serde(default)]
        hidden: Vec<usize>,
        outputs: usize,
    },
    /// `f(x, w) = Π_j x_j^{w_j}` on strictly positive inputs.
    Nalu { inputs: usize },
    /// `f(x, W) = φ(x) W` for a fixed feature map `φ`, no bias.
    LinearFeatures {
        inputs: usize,
        #[serde(default)]
        feature_map: FeatureMap,
        #[serde(default = "one")]
        outputs: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    Identity,
    Log,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative with the subgradient at 0 taken from the left piece (0 for ReLU).
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// `φ(c·z) = c·φ(z)` for every `c > 0`.
    pub fn is_positive_homogeneous(self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Likelihood {
    /// Softmax link over `outputs >= 2` logits.
    Categorical,
    /// Logistic link over a single logit; outputs `[1 - p, p]`.
    Bernoulli,
    /// Identity link with i.i.d. Gaussian noise of the given variance.
    Gaussian { variance: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Softmax,
    Logistic,
    Identity,
}

impl Likelihood {
    pub fn link(self) -> Link {
        match self {
            Likelihood::Categorical => Link::Softmax,
            Likelihood::Bernoulli => Link::Logistic,
            Likelihood::Gaussian { .. } => Link::Identity,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Likelihood::Gaussian { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    #[serde(default)]
    pub activation: Activation,
    pub likelihood: Likelihood,
}

impl ModelSpec {
    pub fn mlp(widths: &[usize]) -> Self {
        ModelSpec {
            architecture: Architecture::Mlp {
                widths: widths.to_vec(),
            },
            activation: Activation::Relu,
            likelihood: Likelihood::Categorical,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.architecture {
            Architecture::Mlp { widths } => widths.first().copied().unwrap_or(0),
            Architecture::Cnn {
                height,
                width,
                channels,
                ..
            } => height * width * channels,
            Architecture::Nalu { inputs } | Architecture::LinearFeatures { inputs, .. } => *inputs,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.architecture {
            Architecture::Mlp { widths } => widths.last().copied().unwrap_or(0),
            Architecture::Cnn { outputs, .. } | Architecture::LinearFeatures { outputs, .. } => {
                *outputs
            }
            Architecture::Nalu { .. } => 1,
        }
    }

    /// Number of classes for classification likelihoods.
    pub fn classes(&self) -> usize {
        match self.likelihood {
            Likelihood::Bernoulli => 2,
            _ => self.output_dim(),
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let arch = format!("{path}.architecture");
        match &self.architecture {
            Architecture::Mlp { widths } => {
                if widths.len() < 2 || widths.contains(&0) {
                    return Err(Error::config(
                        format!("{arch}.widths"),
                        "needs at least two positive widths",
                    ));
                }
            }
            Architecture::Cnn {
                height,
                width,
                channels,
                kernel,
                filters,
                padding,
                hidden,
                outputs,
                ..
            } => {
                if *kernel == 0 || *filters == 0 || *channels == 0 || *outputs == 0 {
                    return Err(Error::config(&arch, "kernel, filters, channels and outputs must be positive"));
                }
                if *padding && kernel % 2 == 0 {
                    return Err(Error::config(format!("{arch}.kernel"), "padding requires an odd kernel"));
                }
                let pad = if *padding { kernel - 1 } else { 0 };
                if height + pad < *kernel || width + pad < *kernel {
                    return Err(Error::config(format!("{arch}.kernel"), "kernel larger than padded image"));
                }
                if hidden.contains(&0) {
                    return Err(Error::config(format!("{arch}.hidden"), "hidden widths must be positive"));
                }
            }
            Architecture::Nalu { inputs } => {
                if *inputs == 0 {
                    return Err(Error::config(format!("{arch}.inputs"), "must be positive"));
                }
                if !matches!(self.likelihood, Likelihood::Gaussian { .. }) {
                    return Err(Error::config(
                        format!("{path}.likelihood"),
                        "nalu requires a gaussian likelihood",
                    ));
                }
            }
            Architecture::LinearFeatures {
                inputs, outputs, ..
            } => {
                if *inputs == 0 || *outputs == 0 {
                    return Err(Error::config(&arch, "inputs and outputs must be positive"));
                }
            }
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(slope.is_finite() && slope >= 0.0) {
                return Err(Error::config(
                    format!("{path}.activation.slope"),
                    "must be finite and non-negative",
                ));
            }
        }
        match self.likelihood {
            Likelihood::Categorical if self.output_dim() < 2 => Err(Error::config(
                format!("{path}.likelihood"),
                "categorical likelihood needs at least two outputs",
            )),
            Likelihood::Bernoulli if self.output_dim() != 1 => Err(Error::config(
                format!("{path}.likelihood"),
                "bernoulli likelihood needs exactly one output",
            )),
            Likelihood::Gaussian { variance } if !(variance > 0.0 && variance.is_finite()) => {
                Err(Error::config(
                    format!("{path}.likelihood.variance"),
                    "must be positive",
                ))
            }
            _ => Ok(()),
        }
    }
}
