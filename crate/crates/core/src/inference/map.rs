use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LabeledDataset, Model, PriorDensity};
use crate::numkit::RngStream;
use crate::priors::Prior;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    SgdMomentum {
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    Adadelta {
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_adadelta_eps")]
        eps: f64,
    },
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_rho() -> f64 {
    0.9
}
fn default_adadelta_eps() -> f64 {
    1e-6
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// `lr · (1 + cos(π t / T)) / 2` over the whole run.
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitScheme {
    /// Every coordinate from `U(-bound, bound)`.
    Uniform { bound: f64 },
    /// One draw from the prior.
    Prior,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Uniform { bound: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: Schedule,
    pub epochs: usize,
    /// Full batch when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// When set, replaces the prior by the penalty `weight_decay/2 · ‖w‖²`
    /// on the per-point objective. A Gaussian prior `N(0, α²)` corresponds to
    /// `weight_decay = 1 / (α² n)`.
    #[serde(default)]
    pub weight_decay: Option<f64>,
    #[serde(default)]
    pub init: InitScheme,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{path}.{name}"), format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("learning_rate", self.learning_rate)?;
        if let Some(wd) = self.weight_decay {
            nonneg("weight_decay", wd)?;
        }
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::config(format!("{path}.kind.momentum"), "must lie in [0, 1)"));
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                    return Err(Error::config(format!("{path}.kind"), "adam needs betas in [0, 1) and eps > 0"));
                }
            }
            OptimizerKind::Adadelta { rho, eps } => {
                if !(0.0..1.0).contains(&rho) || !(eps > 0.0) {
                    return Err(Error::config(format!("{path}.kind"), "adadelta needs rho in [0, 1) and eps > 0"));
                }
            }
        }
        if let InitScheme::Uniform { bound } = self.init {
            nonneg("init.bound", bound)?;
        }
        if self.epochs == 0 {
            return Err(Error::config(format!("{path}.epochs"), "must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config(format!("{path}.batch_size"), "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    #[serde(skip)]
    pub params: Vec<f64>,
    /// Full-data objective at the end of every epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

enum State {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
    Adadelta { sq_grad: Vec<f64>, sq_delta: Vec<f64> },
}

impl State {
    fn new(kind: OptimizerKind, d: usize) -> Self {
        match kind {
            OptimizerKind::SgdMomentum { .. } => State::Sgd { velocity: vec![0.0; d] },
            OptimizerKind::Adam { .. } => State::Adam {
                m: vec![0.0; d],
                v: vec![0.0; d],
                t: 0,
            },
            OptimizerKind::Adadelta { .. } => State::Adadelta {
                sq_grad: vec![0.0; d],
                sq_delta: vec![0.0; d],
            },
        }
    }

    /// One descent step on `w` given the objective gradient `g`.
    fn step(&mut self, kind: OptimizerKind, lr: f64, w: &mut [f64], g: &[f64]) {
        match (self, kind) {
            (State::Sgd { velocity }, OptimizerKind::SgdMomentum { momentum }) => {
                for ((wi, vi), gi) in w.iter_mut().zip(velocity.iter_mut()).zip(g) {
                    *vi = momentum * *vi + gi;
                    *wi -= lr * *vi;
                }
            }
            (State::Adam { m, v, t }, OptimizerKind::Adam { beta1, beta2, eps }) => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..w.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
            (State::Adadelta { sq_grad, sq_delta }, OptimizerKind::Adadelta { rho, eps }) => {
                for i in 0..w.len() {
                    sq_grad[i] = rho * sq_grad[i] + (1.0 - rho) * g[i] * g[i];
                    let delta = ((sq_delta[i] + eps).sqrt() / (sq_grad[i] + eps).sqrt()) * g[i];
                    sq_delta[i] = rho * sq_delta[i] + (1.0 - rho) * delta * delta;
                    w[i] -= lr * delta;
                }
            }
            _ => unreachable!("optimizer state matches its kind"),
        }
    }
}

/// Objective `-(log p(D_B|w)·n/|B| + log p(w)) / n` (or the weight-decay
/// variant) and its gradient on batch `batch`.
fn objective(
    model: &Model,
    prior: &Prior,
    batch: &LabeledDataset,
    n: usize,
    weight_decay: Option<f64>,
    w: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let ll = model.log_likelihood_grad(w, batch, grad)?;
    let scale = -1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    let mut loss = ll * scale;
    match weight_decay {
        Some(wd) => {
            for (g, x) in grad.iter_mut().zip(w) {
                *g += wd * x;
            }
            loss += 0.5 * wd * w.iter().map(|x| x * x).sum::<f64>();
        }
        None => {
            let mut gp = vec![0.0; w.len()];
            let lp = prior.log_density_grad(w, &mut gp)?;
            let inv_n = 1.0 / n as f64;
            for (g, p) in grad.iter_mut().zip(&gp) {
                *g -= p * inv_n;
            }
            loss -= lp * inv_n;
        }
    }
    Ok(loss)
}

pub fn initial_params(model: &Model, prior: &Prior, init: InitScheme, rng: &mut RngStream) -> Vec<f64> {
    match init {
        InitScheme::Uniform { bound } => (0..model.num_params()).map(|_| rng.uniform_range(-bound, bound)).collect(),
        InitScheme::Prior => prior.sample(rng),
    }
}

/// MAP estimate by first-order descent on the negative log posterior per data point.
pub fn map_fit(model: &Model, prior: &Prior, data: &LabeledDataset, cfg: &OptimizerConfig) -> Result<MapFit> {
    cfg.validate("map")?;
    let root = RngStream::new(cfg.seed, 0);
    let mut w = initial_params(model, prior, cfg.init, &mut root.derive(1));
    let (loss_trace, steps) = fit_from(model, prior, data, cfg, &mut w, &mut root.derive(2))?;
    Ok(MapFit {
        params: w,
        loss_trace,
        steps,
    })
}

fn fit_from(
    model: &Model,
    prior: &Prior,
    data: &LabeledDataset,
    cfg: &OptimizerConfig,
    w: &mut [f64],
    rng: &mut RngStream,
) -> Result<(Vec<f64>, usize)> {
    let n = data.len();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let per_epoch = n.div_ceil(batch);
    let total = cfg.epochs * per_epoch;
    let mut state = State::new(cfg.kind, w.len());
    let mut grad = vec![0.0; w.len()];
    let mut last_finite = w.to_vec();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0;
    for _ in 0..cfg.epochs {
        if batch < n {
            rng.shuffle(&mut order);
        }
        for chunk in order.chunks(batch) {
            let lr = match cfg.schedule {
                Schedule::Constant => cfg.learning_rate,
                Schedule::Cosine => 0.5 * cfg.learning_rate * (1.0 + (PI * t as f64 / total as f64).cos()),
            };
            let result = if batch == n {
                objective(model, prior, data, n, cfg.weight_decay, w, &mut grad)
            } else {
                let sub = data.subset(chunk)?;
                objective(model, prior, &sub, n, cfg.weight_decay, w, &mut grad)
            };
            match result {
                Ok(loss) if loss.is_finite() && grad.iter().all(|g| g.is_finite()) => {
                    last_finite.copy_from_slice(w);
                }
                _ => {
                    return Err(Error::Optimization {
                        step: t,
                        last_finite,
                    })
                }
            }
            state.step(cfg.kind, lr, w, &grad);
            t += 1;
        }
        let epoch_loss = match objective(model, prior, data, n, cfg.weight_decay, w, &mut grad) {
            Ok(v) if v.is_finite() => v,
            _ => {
                return Err(Error::Optimization {
                    step: t,
                    last_finite,
                })
            }
        };
        trace.push(epoch_loss);
    }
    Ok((trace, t))
}
