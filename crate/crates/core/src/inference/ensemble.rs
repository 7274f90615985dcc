use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{LabeledDataset, Model};
use crate::numkit::RngStream;
use crate::priors::Prior;

use super::map::{map_fit, MapFit, OptimizerConfig};

/// Seed of ensemble member `i`; member 0 keeps the configured seed.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        RngStream::new(seed, 0).derive(1000 + i as u64).next_u64()
    }
}

/// `members` independent MAP fits with distinct seeds, run in parallel.
pub fn ensemble_fit(
    model: &Model,
    prior: &Prior,
    data: &LabeledDataset,
    cfg: &OptimizerConfig,
    members: usize,
) -> Result<Vec<MapFit>> {
    if members == 0 {
        return Err(Error::config("inference.ensemble.members", "must be at least 1"));
    }
    (0..members)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = member_seed(cfg.seed, i);
            map_fit(model, prior, data, &c)
        })
        .collect()
}
