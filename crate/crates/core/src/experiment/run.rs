use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{MetricBundle, Predictor};
use crate::data::{load_idx, PlantedTask, Standardizer};
use crate::error::{Error, Result};
use crate::inference::{ensemble_fit, hmc_sample, map_fit, save_chain, Chain};
use crate::models::{LabeledDataset, Model};
use crate::numkit::RngStream;
use crate::priors::Prior;

use super::analyses::run_analysis;
use super::config::{CheckOp, DataConfig, ExperimentConfig, FitConfig, FitMethod};
use super::output::Table;

/// Stream ids below the experiment seed.
const DATA_STREAM: u64 = 1;
const ANALYSIS_STREAM: u64 = 2;

pub struct Datasets {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub enum FitOutput {
    Chain(Box<Chain>),
    Map { final_loss: f64, steps: usize },
    Ensemble { final_losses: Vec<f64> },
}

/// A finished fit: the prior it used, its training set and its parameter sets.
pub struct Fitted {
    pub prior: Prior,
    pub train: LabeledDataset,
    /// Chain samples, the single MAP vector, or one vector per ensemble member.
    pub params: Vec<Vec<f64>>,
    pub output: FitOutput,
}

impl Fitted {
    pub fn predictor(&self) -> Predictor<'_> {
        match self.output {
            FitOutput::Map { .. } => Predictor::Point(&self.params[0]),
            _ => Predictor::Average(&self.params),
        }
    }

    pub fn chain(&self) -> Option<&Chain> {
        match &self.output {
            FitOutput::Chain(c) => Some(c),
            _ => None,
        }
    }
}

/// Seed of a fit: its configured seed mixed with the experiment seed.
pub fn mix_seed(experiment: u64, local: u64) -> u64 {
    RngStream::new(experiment, local).next_u64()
}

/// Stable stream label for a name.
pub(crate) fn name_label(name: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Option<Datasets>> {
    let Some(data) = &cfg.data else {
        return Ok(None);
    };
    let sets = match data {
        DataConfig::Synthetic { generator, train, test } => {
            let root = RngStream::new(cfg.seed, DATA_STREAM);
            let task = PlantedTask::new(generator, &mut root.derive(0))?;
            Datasets {
                train: task.sample(*train, &mut root.derive(1))?,
                test: task.sample(*test, &mut root.derive(2))?,
            }
        }
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            max_train,
            max_test,
            standardize,
        } => {
            let head = |d: LabeledDataset, max: Option<usize>| -> Result<LabeledDataset> {
                match max {
                    Some(k) if k < d.len() => d.subset(&(0..k).collect::<Vec<_>>()),
                    _ => Ok(d),
                }
            };
            let mut train = head(load_idx(train_images, train_labels)?, *max_train)?;
            let mut test = head(load_idx(test_images, test_labels)?, *max_test)?;
            if *standardize {
                let s = Standardizer::fit(&train.inputs)?;
                train = s.apply(&train)?;
                test = s.apply(&test)?;
            }
            Datasets { train, test }
        }
    };
    if let Some(m) = &cfg.model {
        if sets.train.inputs.cols() != m.input_dim() {
            return Err(Error::config(
                "model.architecture",
                format!("model takes {} inputs, data has {}", m.input_dim(), sets.train.inputs.cols()),
            ));
        }
    }
    Ok(Some(sets))
}

fn fit_one(cfg: &ExperimentConfig, model: &Model, data: Option<&Datasets>, fit: &FitConfig) -> Result<Fitted> {
    let train = match data {
        Some(d) => match fit.train_size {
            Some(k) if k > d.train.len() => {
                return Err(Error::config(
                    "train_size",
                    format!("{k} exceeds the {} training points", d.train.len()),
                ))
            }
            Some(k) => d.train.subset(&(0..k).collect::<Vec<_>>())?,
            None => d.train.clone(),
        },
        None => return Err(Error::config("data", "fits need data to bind priors and likelihoods")),
    };
    let prior = Prior::build(&cfg.priors[&fit.prior], model, Some(&train))?;
    let (params, output) = match &fit.method {
        FitMethod::Hmc { sampler } => {
            let mut s = sampler.clone();
            s.seed = mix_seed(cfg.seed, sampler.seed);
            let chain = hmc_sample(model, &prior, fit.use_data.then_some(&train), &s)?;
            (chain.samples.clone(), FitOutput::Chain(Box::new(chain)))
        }
        FitMethod::Map { optimizer } => {
            let mut o = optimizer.clone();
            o.seed = mix_seed(cfg.seed, optimizer.seed);
            let f = map_fit(model, &prior, &train, &o)?;
            let final_loss = f.loss_trace.last().copied().unwrap_or(f64::NAN);
            (vec![f.params], FitOutput::Map { final_loss, steps: f.steps })
        }
        FitMethod::Ensemble { members, optimizer } => {
            let mut o = optimizer.clone();
            o.seed = mix_seed(cfg.seed, optimizer.seed);
            let fits = ensemble_fit(model, &prior, &train, &o, *members)?;
            let final_losses = fits.iter().map(|f| f.loss_trace.last().copied().unwrap_or(f64::NAN)).collect();
            (fits.into_iter().map(|f| f.params).collect(), FitOutput::Ensemble { final_losses })
        }
    };
    Ok(Fitted {
        prior,
        train,
        params,
        output,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub method: String,
    pub prior: String,
    pub train_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accept_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leapfrog_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergences: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub parameter_sets: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub final_losses: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn diagnostics(cfg: &FitConfig, f: &Fitted) -> FitDiagnostics {
    let mut d = FitDiagnostics {
        prior: cfg.prior.clone(),
        train_size: f.train.len(),
        parameter_sets: f.params.len(),
        ..Default::default()
    };
    match &f.output {
        FitOutput::Chain(c) => {
            d.method = "hmc".into();
            d.accept_rate = Some(c.accept_rate);
            d.step_size = Some(c.config.step_size);
            d.leapfrog_steps = Some(c.config.leapfrog_steps);
            d.divergences = Some(c.divergences);
            d.temperature = Some(c.config.temperature);
            d.warnings = c.warnings.clone();
        }
        FitOutput::Map { final_loss, .. } => {
            d.method = "map".into();
            d.final_losses = vec![*final_loss];
        }
        FitOutput::Ensemble { final_losses } => {
            d.method = "ensemble".into();
            d.final_losses = final_losses.clone();
        }
    }
    d
}

/// Tables collected while analyses run.
pub struct Tables {
    pub metrics: Table,
    pub projections: Table,
    pub spectrum: Table,
}

impl Default for Tables {
    fn default() -> Self {
        Tables {
            metrics: Table::new(&["analysis", "fit", "magnitude", "accuracy", "nll", "ece", "ece_bins"]),
            projections: Table::new(&[
                "analysis",
                "fit",
                "direction",
                "units",
                "samples",
                "effective_samples",
                "mean",
                "variance",
                "prior_variance",
                "z",
                "variance_ratio",
                "ks",
                "max_abs",
                "pass",
            ]),
            spectrum: Table::new(&["analysis", "component", "reference", "before", "after", "increase"]),
        }
    }
}

impl Tables {
    pub fn metric_row(&mut self, analysis: &str, fit: &str, magnitude: f64, m: &MetricBundle) {
        self.metrics.push(vec![
            analysis.into(),
            fit.into(),
            magnitude.into(),
            m.accuracy.into(),
            m.nll.into(),
            m.ece.into(),
            m.bins.into(),
        ]);
    }
}

/// Everything an analysis may read.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub model: Option<&'a Model>,
    pub data: Option<&'a Datasets>,
    pub fits: &'a BTreeMap<String, Fitted>,
}

impl Context<'_> {
    pub fn model(&self) -> Result<&Model> {
        self.model.ok_or_else(|| Error::config("model", "missing"))
    }

    pub fn data(&self) -> Result<&Datasets> {
        self.data.ok_or_else(|| Error::config("data", "missing"))
    }

    pub fn fit(&self, name: &str) -> Result<&Fitted> {
        self.fits
            .get(name)
            .ok_or_else(|| Error::config("fits", format!("unknown fit `{name}`")))
    }

    pub fn prior(&self, name: &str) -> Result<Prior> {
        let cfg = self
            .cfg
            .priors
            .get(name)
            .ok_or_else(|| Error::config("priors", format!("unknown prior `{name}`")))?;
        Prior::build(cfg, self.model()?, self.data.map(|d| &d.train))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// `None` when a referenced measurement is missing or not finite.
    pub value: Option<f64>,
    pub op: CheckOp,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    ChecksFailed,
    /// A runtime error stopped the run; outputs are partial.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub description: String,
    pub config_hash: String,
    pub git_describe: String,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub measurements: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub fits: BTreeMap<String, FitDiagnostics>,
}

pub fn evaluate_checks(cfg: &ExperimentConfig, m: &BTreeMap<String, f64>) -> Vec<CheckResult> {
    cfg.checks
        .iter()
        .map(|c| {
            let value = c
                .terms
                .iter()
                .map(|(name, coef)| m.get(name).map(|v| coef * v))
                .sum::<Option<f64>>()
                .map(|v| if c.abs { v.abs() } else { v })
                .filter(|v| v.is_finite());
            CheckResult {
                name: c.name.clone(),
                value,
                op: c.op,
                bound: c.bound,
                pass: value.is_some_and(|v| c.op.holds(v, c.bound)),
            }
        })
        .collect()
}

fn git_describe() -> String {
    Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Runs a validated experiment and writes every output under `out_dir`.
///
/// Config problems are returned as errors before anything is written. A
/// runtime failure still writes a report, with status `failed` and whatever
/// tables were complete.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut timing = String::new();
    let started = Instant::now();
    let mut tables = Tables::default();
    let mut measurements = BTreeMap::new();
    let mut fit_diag = BTreeMap::new();
    let mut chains = Vec::new();

    let outcome = (|| -> Result<()> {
        let t = Instant::now();
        let model = cfg.model.clone().map(Model::new).transpose()?;
        let data = prepare_data(cfg)?;
        let _ = writeln!(timing, "data {:.3}s", t.elapsed().as_secs_f64());

        let t = Instant::now();
        let results: Vec<(String, Result<Fitted>)> = cfg
            .fits
            .par_iter()
            .map(|(name, f)| {
                let r = match &model {
                    Some(m) => fit_one(cfg, m, data.as_ref(), f),
                    None => Err(Error::config("model", "fits need a model")),
                };
                (name.clone(), r)
            })
            .collect();
        let mut fits = BTreeMap::new();
        for (name, r) in results {
            let fitted = r.map_err(|e| Error::Numeric(format!("fit `{name}`: {e}")))?;
            fit_diag.insert(name.clone(), diagnostics(&cfg.fits[&name], &fitted));
            if let Some(c) = fitted.chain() {
                chains.push((name.clone(), c.clone()));
            }
            fits.insert(name, fitted);
        }
        let _ = writeln!(timing, "fits {:.3}s", t.elapsed().as_secs_f64());

        let ctx = Context {
            cfg,
            model: model.as_ref(),
            data: data.as_ref(),
            fits: &fits,
        };
        for (id, a) in &cfg.analyses {
            let t = Instant::now();
            let mut rng = RngStream::new(cfg.seed, ANALYSIS_STREAM).derive(name_label(id));
            run_analysis(&ctx, id, a, &mut rng, &mut measurements, &mut tables)
                .map_err(|e| Error::Numeric(format!("analysis `{id}`: {e}")))?;
            let _ = writeln!(timing, "analysis {id} {:.3}s", t.elapsed().as_secs_f64());
        }
        Ok(())
    })();

    let checks = evaluate_checks(cfg, &measurements);
    let status = match &outcome {
        Err(_) => RunStatus::Failed,
        Ok(()) if checks.iter().all(|c| c.pass) => RunStatus::Passed,
        Ok(()) => RunStatus::ChecksFailed,
    };
    let report = RunReport {
        name: cfg.name.clone(),
        description: cfg.description.clone(),
        config_hash: cfg.hash(),
        git_describe: git_describe(),
        seed: cfg.seed,
        status,
        error: outcome.err().map(|e| e.to_string()),
        measurements,
        checks,
        fits: fit_diag,
    };

    if !chains.is_empty() {
        let dir = out_dir.join("chains");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (name, c) in &chains {
            save_chain(c, &dir, name)?;
        }
    }
    tables.metrics.write(&out_dir.join("metrics.csv"))?;
    tables.projections.write(&out_dir.join("projections.csv"))?;
    tables.spectrum.write(&out_dir.join("spectrum.csv"))?;
    let path = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let _ = writeln!(timing, "total {:.3}s", started.elapsed().as_secs_f64());
    let path = out_dir.join("timing.txt");
    std::fs::write(&path, timing).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
