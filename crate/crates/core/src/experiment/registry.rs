use crate::error::Result;

use super::config::{parse_config, ExperimentConfig};

/// A config shipped with the library.
#[derive(Clone, Copy, Debug)]
pub struct BundledExperiment {
    pub name: &'static str,
    /// Acceptance criterion this config reproduces.
    pub criterion: u8,
    pub json: &'static str,
}

impl BundledExperiment {
    pub fn config(&self) -> Result<ExperimentConfig> {
        parse_config(self.json)
    }
}

macro_rules! bundled {
    ($($criterion:literal => $name:literal),* $(,)?) => {
        &[$(BundledExperiment {
            name: $name,
            criterion: $criterion,
            json: include_str!(concat!("../../experiments/", $name, ".json")),
        }),*]
    };
}

const BUNDLED: &[BundledExperiment] = bundled![
    1 => "conjugate_oracle",
    2 => "dead_feature_grid",
    3 => "dead_feature_sampler",
    4 => "affine_subspace",
    5 => "patch_subspace",
    6 => "dead_feature_predictions",
    7 => "pca_direction_noise",
    8 => "empcov_remedy",
    9 => "sumfilter_shift",
    10 => "nalu_multiplicative",
    11 => "tempering",
    12 => "low_data",
    13 => "corruption_spectra",
    14 => "init_ablation",
    15 => "numerics",
];

pub fn bundled() -> &'static [BundledExperiment] {
    BUNDLED
}

pub fn find_bundled(name: &str) -> Option<&'static BundledExperiment> {
    BUNDLED.iter().find(|b| b.name == name)
}

pub fn bundled_for_criterion(criterion: u8) -> Option<&'static BundledExperiment> {
    BUNDLED.iter().find(|b| b.criterion == criterion)
}

/// JSON schema of [`ExperimentConfig`], as shipped in `schema/experiment.schema.json`.
pub fn schema_json() -> String {
    let mut s = serde_json::to_string_pretty(&schemars::schema_for!(ExperimentConfig)).expect("schema serializes");
    s.push('\n');
    s
}
