use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LabeledDataset, Layout, LogDensity, Model, Posterior};
use crate::numkit::RngStream;
use crate::priors::Prior;

use super::leapfrog::leapfrog;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryRule {
    /// Use `step_size` and `leapfrog_steps` as given.
    #[default]
    Explicit,
    /// Trajectory length `π σ / 2` with `σ` the tempered prior scale; the step
    /// count is `ceil(length / step_size)` and the step is shrunk to fit.
    PiSigmaHalf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ChainInit {
    /// One exact draw from the prior.
    #[default]
    PriorDraw,
    Zeros,
}

/// Short tuning runs that rescale the step until the acceptance rate lands
/// in `[low, high]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    #[serde(default = "default_pilot_iterations")]
    pub iterations: usize,
    #[serde(default = "default_pilot_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
}

fn default_pilot_iterations() -> usize {
    40
}
fn default_pilot_rounds() -> usize {
    12
}
fn default_low() -> f64 {
    0.6
}
fn default_high() -> f64 {
    0.95
}
fn default_temperature() -> f64 {
    1.0
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            iterations: default_pilot_iterations(),
            max_rounds: default_pilot_rounds(),
            low: default_low(),
            high: default_high(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    pub step_size: f64,
    #[serde(default = "one_step")]
    pub leapfrog_steps: usize,
    #[serde(default)]
    pub trajectory: TrajectoryRule,
    pub num_iterations: usize,
    /// Defaults to 10% of `num_iterations`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub seed: u64,
    /// Per-iteration step multiplier drawn from `1 ± step_jitter`.
    #[serde(default)]
    pub step_jitter: f64,
    #[serde(default)]
    pub pilot: Option<PilotConfig>,
    #[serde(default)]
    pub init: ChainInit,
}

fn one_step() -> usize {
    1
}

impl HmcConfig {
    pub fn new(step_size: f64, leapfrog_steps: usize, num_iterations: usize, seed: u64) -> Self {
        HmcConfig {
            step_size,
            leapfrog_steps,
            trajectory: TrajectoryRule::Explicit,
            num_iterations,
            burn_in: None,
            temperature: 1.0,
            seed,
            step_jitter: 0.0,
            pilot: None,
            init: ChainInit::PriorDraw,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.num_iterations / 10)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(format!("{path}.step_size"), "must be positive"));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::config(format!("{path}.leapfrog_steps"), "must be at least 1"));
        }
        if self.num_iterations == 0 || self.burn_in() >= self.num_iterations {
            return Err(Error::config(
                format!("{path}.burn_in"),
                "burn-in must be smaller than num_iterations",
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!("{path}.temperature"), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return Err(Error::config(format!("{path}.step_jitter"), "must lie in [0, 1)"));
        }
        if let Some(p) = &self.pilot {
            if p.iterations == 0 || !(0.0 < p.low && p.low < p.high && p.high <= 1.0) {
                return Err(Error::config(format!("{path}.pilot"), "needs iterations > 0 and 0 < low < high <= 1"));
            }
        }
        Ok(())
    }

    /// Applies the trajectory rule for a prior of scale `prior_scale`.
    pub fn resolve(&self, prior_scale: f64) -> HmcConfig {
        let mut out = self.clone();
        if self.trajectory == TrajectoryRule::PiSigmaHalf {
            let length = trajectory_length(prior_scale, self.temperature);
            let steps = ((length / self.step_size).ceil() as usize).max(1);
            out.leapfrog_steps = steps;
            out.step_size = length / steps as f64;
        }
        out
    }
}

/// `π σ √T / 2`: a quarter period of the dynamics of the tempered prior.
pub fn trajectory_length(prior_scale: f64, temperature: f64) -> f64 {
    0.5 * PI * prior_scale * temperature.sqrt()
}

/// Post-burn-in samples plus per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
    pub layout: Layout,
    /// Metropolis decision of every iteration, burn-in included.
    pub accepted: Vec<bool>,
    /// Hamiltonian of the state kept at every iteration.
    pub energies: Vec<f64>,
    /// Configuration after pilot tuning and trajectory resolution.
    pub config: HmcConfig,
    pub accept_rate: f64,
    pub divergences: usize,
    pub warnings: Vec<String>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

struct State {
    q: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
}

struct Step {
    accepted: bool,
    diverged: bool,
    energy: f64,
}

fn transition(target: &dyn LogDensity, s: &mut State, step: f64, steps: usize, rng: &mut RngStream) -> Step {
    let p = rng.normal_vec(s.q.len());
    let h0 = -s.lp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let t = leapfrog(target, &s.q, &p, &s.grad, s.lp, step, steps);
    let u = rng.uniform();
    if t.diverged {
        return Step {
            accepted: false,
            diverged: true,
            energy: h0,
        };
    }
    let h1 = -t.log_density + 0.5 * t.momentum.iter().map(|v| v * v).sum::<f64>();
    if h1.is_finite() && u.ln() < h0 - h1 {
        s.q = t.position;
        s.lp = t.log_density;
        s.grad = t.grad;
        Step {
            accepted: true,
            diverged: false,
            energy: h1,
        }
    } else {
        Step {
            accepted: false,
            diverged: !h1.is_finite(),
            energy: h0,
        }
    }
}

fn jittered(step: f64, jitter: f64, rng: &mut RngStream) -> f64 {
    if jitter > 0.0 {
        step * (1.0 + jitter * (2.0 * rng.uniform() - 1.0))
    } else {
        step
    }
}

/// Pilot tuning: returns the tuned (step, steps) and the state reached.
fn tune(target: &dyn LogDensity, cfg: &HmcConfig, prior_scale: f64, s: &mut State, rng: &mut RngStream) -> HmcConfig {
    let Some(pilot) = cfg.pilot else {
        return cfg.resolve(prior_scale);
    };
    let mut trial = cfg.clone();
    let mut resolved = trial.resolve(prior_scale);
    for _ in 0..pilot.max_rounds {
        let mut acc = 0usize;
        for _ in 0..pilot.iterations {
            let step = jittered(resolved.step_size, cfg.step_jitter, rng);
            acc += usize::from(transition(target, s, step, resolved.leapfrog_steps, rng).accepted);
        }
        let rate = acc as f64 / pilot.iterations as f64;
        if rate < pilot.low {
            trial.step_size *= 0.6;
        } else if rate > pilot.high && cfg.trajectory == TrajectoryRule::PiSigmaHalf && resolved.leapfrog_steps > 1 {
            trial.step_size *= 1.5;
        } else {
            break;
        }
        resolved = trial.resolve(prior_scale);
    }
    resolved
}

/// Metropolis-adjusted HMC on an arbitrary target from `init`.
pub fn hmc_run(target: &dyn LogDensity, init: Vec<f64>, prior_scale: f64, layout: Layout, cfg: &HmcConfig) -> Result<Chain> {
    cfg.validate("hmc")?;
    if init.len() != target.dim() {
        return Err(Error::Shape(format!("init has {} entries, target {}", init.len(), target.dim())));
    }
    let root = RngStream::new(cfg.seed, 0);
    let mut rng = root.derive(2);
    let mut grad = vec![0.0; init.len()];
    let lp = target.log_density_grad(&init, &mut grad)?;
    if !lp.is_finite() {
        return Err(Error::Numeric("initial state has non-finite log density".into()));
    }
    let mut state = State { q: init, lp, grad };
    let resolved = tune(target, cfg, prior_scale, &mut state, &mut root.derive(3));

    let burn = cfg.burn_in();
    let mut samples = Vec::with_capacity(cfg.num_iterations - burn);
    let mut accepted = Vec::with_capacity(cfg.num_iterations);
    let mut energies = Vec::with_capacity(cfg.num_iterations);
    let mut divergences = 0;
    for it in 0..cfg.num_iterations {
        let step = jittered(resolved.step_size, cfg.step_jitter, &mut rng);
        let st = transition(target, &mut state, step, resolved.leapfrog_steps, &mut rng);
        accepted.push(st.accepted);
        energies.push(st.energy);
        divergences += usize::from(st.diverged);
        if it >= burn {
            samples.push(state.q.clone());
        }
    }
    let accept_rate = accepted.iter().filter(|&&a| a).count() as f64 / accepted.len() as f64;
    let mut warnings = Vec::new();
    if accept_rate < 0.1 {
        warnings.push(format!("acceptance rate {accept_rate:.3} is below 0.1"));
    }
    if divergences > 0 {
        warnings.push(format!("{divergences} divergent trajectories"));
    }
    Ok(Chain {
        samples,
        layout,
        accepted,
        energies,
        config: resolved,
        accept_rate,
        divergences,
        warnings,
    })
}

/// HMC on the tempered posterior of `model` under `prior`; `data = None`
/// samples the tempered prior.
pub fn hmc_sample(model: &Model, prior: &Prior, data: Option<&LabeledDataset>, cfg: &HmcConfig) -> Result<Chain> {
    let post = Posterior::new(model, prior, data, cfg.temperature)?;
    let init = match cfg.init {
        ChainInit::PriorDraw => prior.sample(&mut RngStream::new(cfg.seed, 0).derive(1)),
        ChainInit::Zeros => vec![0.0; model.num_params()],
    };
    hmc_run(&post, init, prior.scale_hint(), model.layout().clone(), cfg)
}
