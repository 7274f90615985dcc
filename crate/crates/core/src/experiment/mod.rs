//! Config-driven experiments: data, fits, analyses, checks and reports.

mod analyses;
mod config;
mod output;
mod registry;
mod run;

pub use config::{
    load_config, parse_config, AnalysisConfig, AxisSpec, CheckConfig, CheckOp, DataConfig, ExperimentConfig, FitConfig,
    FitMethod, MagnitudeUnit, ProbeSpec, SpectrumSpace,
};
pub use output::{fmt_g10, Cell, Table};
pub use registry::{bundled, bundled_for_criterion, find_bundled, schema_json, BundledExperiment};
pub use run::{
    evaluate_checks, mix_seed, prepare_data, run_experiment, CheckResult, Datasets, FitDiagnostics, FitOutput, Fitted,
    RunReport, RunStatus,
};
