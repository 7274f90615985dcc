//! Network architectures, flat parameter layouts and likelihoods.

mod conv;
mod dataset;
mod gradcheck;
mod network;
mod params;
mod posterior;
mod spec;

pub use conv::ConvGeometry;
pub use gradcheck::{max_gradient_error, FnDensity};
pub use dataset::{DatasetMeta, DirectionSpace, InputShape, LabeledDataset, PlantedDirection, Target, Targets};
pub use network::{apply_link, sigmoid, Model};
pub use params::{Block, FirstLayerView, Layout, ParamVector};
pub use posterior::{grad_log_posterior, LogDensity, Posterior, PriorDensity};
pub use spec::{Activation, Architecture, FeatureMap, Likelihood, Link, ModelSpec};
