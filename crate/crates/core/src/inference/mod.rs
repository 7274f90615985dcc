//! HMC sampling, MAP optimization, deep ensembles and model averaging.

mod bma;
mod ensemble;
mod hmc;
mod leapfrog;
mod map;
mod sidecar;

pub use bma::{argmax, bma_predict, Predictive};
pub use ensemble::{ensemble_fit, member_seed};
pub use hmc::{hmc_run, hmc_sample, trajectory_length, Chain, ChainInit, HmcConfig, PilotConfig, TrajectoryRule};
pub use leapfrog::{leapfrog, leapfrog_trajectory, Trajectory};
pub use map::{initial_params, map_fit, InitScheme, MapFit, OptimizerConfig, OptimizerKind, Schedule};
pub use sidecar::{decode_samples, encode_samples, load_chain, save_chain};
