use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::MatchThresholds;
use crate::data::{CorruptionSpec, GeneratorConfig};
use crate::error::{Error, Result};
use crate::inference::{HmcConfig, OptimizerConfig};
use crate::models::{Architecture, ModelSpec};
use crate::priors::PriorConfig;

/// A complete, seeded experiment: data, model, priors, fits, analyses and
/// the pass/fail checks evaluated on the resulting measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub priors: BTreeMap<String, PriorConfig>,
    #[serde(default)]
    pub fits: BTreeMap<String, FitConfig>,
    #[serde(default)]
    pub analyses: BTreeMap<String, AnalysisConfig>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Train and test sets drawn from one planted task.
    Synthetic {
        generator: GeneratorConfig,
        train: usize,
        test: usize,
    },
    /// IDX image/label files; relative paths resolve against the config file.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
        /// Standardize every feature with train-set statistics.
        #[serde(default)]
        standardize: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Key into `priors`.
    pub prior: String,
    /// Use only the first `train_size` training points.
    #[serde(default)]
    pub train_size: Option<usize>,
    /// `false` samples or optimizes the prior alone.
    #[serde(default = "yes")]
    pub use_data: bool,
    pub method: FitMethod,
}

fn yes() -> bool {
    true
}

/// Seeds inside a method are combined with the experiment seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitMethod {
    Hmc { sampler: HmcConfig },
    Map { optimizer: OptimizerConfig },
    Ensemble { members: usize, optimizer: OptimizerConfig },
}

/// A first-layer direction to project weights onto.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    /// Every dependence planted in the training data, as `(c, -c0)`.
    Planted,
    /// Unit vector on one input feature.
    Feature { index: usize },
    /// Explicit weights (one entry per first-layer input, optionally plus bias).
    Vector { label: String, vector: Vec<f64> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeUnit {
    #[default]
    Absolute,
    /// Multiples of the mean per-feature standard deviation of the training inputs.
    TrainStd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpace {
    #[default]
    Input,
    /// Valid `kernel x kernel` patches; positions a translation would fill
    /// from outside the image are dropped.
    Patch { kernel: usize },
}

/// One axis of a grid: `nodes` equally spaced points on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisConfig {
    /// Posterior projections against the prior marginal, pooled over units.
    PriorMatch {
        fit: String,
        probes: Vec<ProbeSpec>,
        #[serde(default)]
        thresholds: MatchThresholds,
    },
    /// Largest absolute projection over units and parameter vectors.
    Projection { fit: String, probes: Vec<ProbeSpec> },
    /// Clean test-set metrics.
    Evaluate { fits: Vec<String> },
    Robustness {
        fits: Vec<String>,
        corruption: CorruptionSpec,
        magnitudes: Vec<f64>,
        #[serde(default)]
        unit: MagnitudeUnit,
    },
    /// Per-component test-set variance before and after a corruption, in the
    /// principal basis of the training data.
    Spectrum {
        corruption: CorruptionSpec,
        #[serde(default)]
        space: SpectrumSpace,
        #[serde(default)]
        unit: MagnitudeUnit,
    },
    /// HMC and MAP against the exact linear-Gaussian posterior.
    ConjugateOracle { hmc: String, map: String },
    /// Brute-force posterior on a grid; compares the marginal along `axis`
    /// with the prior marginal. With `rotate_to`, grid axis 0 runs along that
    /// probe direction.
    GridMarginal {
        prior: String,
        axes: Vec<AxisSpec>,
        axis: usize,
        #[serde(default)]
        rotate_to: Option<ProbeSpec>,
    },
    /// Per-coordinate sample variance against `prior variance x temperature`.
    TemperedVariance { fit: String },
    /// Prior variance of the first-layer projection along each probe.
    PriorVariance { prior: String, probes: Vec<ProbeSpec> },
    /// Predictions as one feature is set to growing constants on the test set.
    FeatureSweep {
        map: String,
        hmc: String,
        feature: usize,
        values: Vec<f64>,
        /// Value compared with the first entry of `values` for the model average.
        compare: f64,
        /// Value at which per-sample classes are compared with limiting logits.
        far: f64,
        separation: f64,
    },
    /// `conv(w, x + c) - conv(w, x) - c·Σw` over prior draws and test images.
    ConvShift { prior: String, shifts: Vec<f64>, draws: usize },
    /// Analytic gradients of small random problems against central differences.
    GradientCheck {
        models: Vec<ModelSpec>,
        #[serde(default = "default_fd_step")]
        step: f64,
    },
    /// Forward then momentum-flipped leapfrog on the training posterior.
    Reversibility {
        prior: String,
        step_size: f64,
        steps: usize,
        trials: usize,
    },
}

fn default_fd_step() -> f64 {
    1e-5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum CheckOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CheckOp {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            CheckOp::Lt => value < bound,
            CheckOp::Le => value <= bound,
            CheckOp::Gt => value > bound,
            CheckOp::Ge => value >= bound,
        }
    }
}

/// `op(Σ coef · measurement, bound)`, optionally on the absolute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub name: String,
    pub terms: BTreeMap<String, f64>,
    #[serde(default)]
    pub abs: bool,
    pub op: CheckOp,
    pub bound: f64,
}

/// Parses JSON, reporting the offending field path on failure.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(base) = path.parent() {
        cfg.resolve_paths(base);
    }
    Ok(cfg)
}

enum FitKind {
    Hmc,
    Map,
    Any,
}

impl ExperimentConfig {
    /// Makes relative data paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        }) = &mut self.data
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace),
    /// ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if let Some(m) = &self.model {
            m.validate("model")?;
        }
        match &self.data {
            Some(DataConfig::Synthetic { generator, train, test }) => {
                generator.validate("data.generator")?;
                if *train == 0 || *test == 0 {
                    return Err(Error::config("data", "train and test sizes must be positive"));
                }
                if let Some(m) = &self.model {
                    if m.input_dim() != generator.shape.len() {
                        return Err(Error::config(
                            "model.architecture",
                            format!("model takes {} inputs, generator makes {}", m.input_dim(), generator.shape.len()),
                        ));
                    }
                }
            }
            Some(DataConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            }) => {
                for (field, p) in [
                    ("train_images", train_images),
                    ("train_labels", train_labels),
                    ("test_images", test_images),
                    ("test_labels", test_labels),
                ] {
                    if !p.is_file() {
                        return Err(Error::config(format!("data.{field}"), format!("{} does not exist", p.display())));
                    }
                }
            }
            None => {}
        }
        for (name, p) in &self.priors {
            p.validate(&format!("priors.{name}"))?;
        }
        for (name, fit) in &self.fits {
            let path = format!("fits.{name}");
            if !self.priors.contains_key(&fit.prior) {
                return Err(Error::config(format!("{path}.prior"), format!("unknown prior `{}`", fit.prior)));
            }
            if self.data.is_none() {
                return Err(Error::config(path.to_string(), "fits need data to bind priors and likelihoods"));
            }
            if self.model.is_none() {
                return Err(Error::config("model", "fits need a model"));
            }
            if fit.train_size == Some(0) {
                return Err(Error::config(format!("{path}.train_size"), "must be positive"));
            }
            match &fit.method {
                FitMethod::Hmc { sampler } => sampler.validate(&format!("{path}.method.sampler"))?,
                FitMethod::Map { optimizer } => optimizer.validate(&format!("{path}.method.optimizer"))?,
                FitMethod::Ensemble { members, optimizer } => {
                    if *members == 0 {
                        return Err(Error::config(format!("{path}.method.members"), "must be at least 1"));
                    }
                    optimizer.validate(&format!("{path}.method.optimizer"))?;
                }
            }
            if !fit.use_data && !matches!(fit.method, FitMethod::Hmc { .. }) {
                return Err(Error::config(format!("{path}.use_data"), "only samplers can run without data"));
            }
        }
        for (id, a) in &self.analyses {
            self.validate_analysis(id, a)?;
        }
        for (i, c) in self.checks.iter().enumerate() {
            if c.terms.is_empty() {
                return Err(Error::config(format!("checks[{i}].terms"), "needs at least one term"));
            }
            if !c.bound.is_finite() {
                return Err(Error::config(format!("checks[{i}].bound"), "must be finite"));
            }
        }
        Ok(())
    }

    fn fit_ref(&self, path: &str, name: &str, kind: FitKind) -> Result<()> {
        let fit = self
            .fits
            .get(name)
            .ok_or_else(|| Error::config(path, format!("unknown fit `{name}`")))?;
        let ok = matches!(
            (kind, &fit.method),
            (FitKind::Any, _) | (FitKind::Hmc, FitMethod::Hmc { .. }) | (FitKind::Map, FitMethod::Map { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::config(path, format!("fit `{name}` has the wrong method for this analysis")))
        }
    }

    fn prior_ref(&self, path: &str, name: &str) -> Result<()> {
        if self.priors.contains_key(name) {
            Ok(())
        } else {
            Err(Error::config(path, format!("unknown prior `{name}`")))
        }
    }

    fn needs(&self, path: &str, data: bool) -> Result<()> {
        if self.model.is_none() {
            return Err(Error::config(path, "analysis needs a model"));
        }
        if data && self.data.is_none() {
            return Err(Error::config(path, "analysis needs data"));
        }
        Ok(())
    }

    fn validate_analysis(&self, id: &str, a: &AnalysisConfig) -> Result<()> {
        let path = format!("analyses.{id}");
        if id.is_empty() || id.contains(['.', ',', '"', '\n']) {
            return Err(Error::config(path, "analysis ids must be non-empty and free of `.`, `,` and quotes"));
        }
        match a {
            AnalysisConfig::PriorMatch { fit, probes, thresholds } => {
                self.fit_ref(&format!("{path}.fit"), fit, FitKind::Hmc)?;
                if probes.is_empty() {
                    return Err(Error::config(format!("{path}.probes"), "needs at least one probe"));
                }
                if !(thresholds.max_abs_z > 0.0 && thresholds.ratio_low < thresholds.ratio_high && thresholds.max_ks > 0.0) {
                    return Err(Error::config(format!("{path}.thresholds"), "thresholds are inconsistent"));
                }
            }
            AnalysisConfig::Projection { fit, probes } => {
                self.fit_ref(&format!("{path}.fit"), fit, FitKind::Any)?;
                if probes.is_empty() {
                    return Err(Error::config(format!("{path}.probes"), "needs at least one probe"));
                }
            }
            AnalysisConfig::Evaluate { fits } => {
                self.needs(&path, true)?;
                for f in fits {
                    self.fit_ref(&format!("{path}.fits"), f, FitKind::Any)?;
                }
            }
            AnalysisConfig::Robustness {
                fits,
                corruption,
                magnitudes,
                ..
            } => {
                self.needs(&path, true)?;
                for f in fits {
                    self.fit_ref(&format!("{path}.fits"), f, FitKind::Any)?;
                }
                corruption.validate(&format!("{path}.corruption"))?;
                if magnitudes.first() != Some(&0.0) || magnitudes.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::config(
                        format!("{path}.magnitudes"),
                        "must start at 0 and increase strictly",
                    ));
                }
            }
            AnalysisConfig::Spectrum { corruption, space, .. } => {
                if self.data.is_none() {
                    return Err(Error::config(&path, "analysis needs data"));
                }
                corruption.validate(&format!("{path}.corruption"))?;
                if let SpectrumSpace::Patch { kernel } = space {
                    if *kernel == 0 {
                        return Err(Error::config(format!("{path}.space.kernel"), "must be positive"));
                    }
                }
            }
            AnalysisConfig::ConjugateOracle { hmc, map } => {
                self.fit_ref(&format!("{path}.hmc"), hmc, FitKind::Hmc)?;
                self.fit_ref(&format!("{path}.map"), map, FitKind::Map)?;
                if !matches!(
                    self.model.as_ref().map(|m| &m.architecture),
                    Some(Architecture::LinearFeatures { outputs: 1, .. })
                ) {
                    return Err(Error::config(path.to_string(), "needs a single-output linear-features model"));
                }
            }
            AnalysisConfig::GridMarginal { prior, axes, axis, .. } => {
                self.needs(&path, true)?;
                self.prior_ref(&format!("{path}.prior"), prior)?;
                if *axis >= axes.len() {
                    return Err(Error::config(format!("{path}.axis"), "out of range"));
                }
                for (i, ax) in axes.iter().enumerate() {
                    if !(ax.lo < ax.hi) || ax.nodes < 2 {
                        return Err(Error::config(format!("{path}.axes[{i}]"), "needs lo < hi and at least 2 nodes"));
                    }
                }
            }
            AnalysisConfig::TemperedVariance { fit } => {
                self.fit_ref(&format!("{path}.fit"), fit, FitKind::Hmc)?;
            }
            AnalysisConfig::PriorVariance { prior, probes } => {
                self.needs(&path, false)?;
                self.prior_ref(&format!("{path}.prior"), prior)?;
                if probes.is_empty() {
                    return Err(Error::config(format!("{path}.probes"), "needs at least one probe"));
                }
            }
            AnalysisConfig::FeatureSweep {
                map,
                hmc,
                values,
                separation,
                ..
            } => {
                self.needs(&path, true)?;
                self.fit_ref(&format!("{path}.map"), map, FitKind::Map)?;
                self.fit_ref(&format!("{path}.hmc"), hmc, FitKind::Hmc)?;
                if values.is_empty() {
                    return Err(Error::config(format!("{path}.values"), "needs at least one value"));
                }
                if !(*separation >= 0.0) {
                    return Err(Error::config(format!("{path}.separation"), "must be non-negative"));
                }
            }
            AnalysisConfig::ConvShift { prior, shifts, draws } => {
                self.needs(&path, true)?;
                self.prior_ref(&format!("{path}.prior"), prior)?;
                match self.model.as_ref().map(|m| &m.architecture) {
                    Some(Architecture::Cnn { padding: false, .. }) => {}
                    _ => return Err(Error::config(path, "needs a CNN with a valid (unpadded) first convolution")),
                }
                if shifts.is_empty() || *draws == 0 {
                    return Err(Error::config(path.to_string(), "needs shifts and at least one draw"));
                }
            }
            AnalysisConfig::GradientCheck { models, step } => {
                for (i, m) in models.iter().enumerate() {
                    m.validate(&format!("{path}.models[{i}]"))?;
                }
                if !(*step > 0.0) {
                    return Err(Error::config(format!("{path}.step"), "must be positive"));
                }
            }
            AnalysisConfig::Reversibility {
                prior,
                step_size,
                steps,
                trials,
            } => {
                self.needs(&path, true)?;
                self.prior_ref(&format!("{path}.prior"), prior)?;
                if !(*step_size > 0.0) || *steps == 0 || *trials == 0 {
                    return Err(Error::config(path, "needs a positive step size, steps and trials"));
                }
            }
        }
        Ok(())
    }
}
