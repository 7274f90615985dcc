use crate::error::{Error, Result};

use super::dataset::LabeledDataset;
use super::network::Model;

/// Anything that can report `log p(w)` and add `∇ log p(w)` into a buffer.
pub trait PriorDensity: Send + Sync {
    fn log_density_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Unnormalized log target plus gradient, as consumed by samplers and optimizers.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Overwrites `grad` with `∇ log π(q)` and returns `log π(q)`.
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Tempered posterior `(log p(D|w) + log p(w)) / T`. `data = None` leaves the
/// prior alone (tempered).
pub struct Posterior<'a> {
    pub model: &'a Model,
    pub prior: &'a dyn PriorDensity,
    pub data: Option<&'a LabeledDataset>,
    pub temperature: f64,
}

impl<'a> Posterior<'a> {
    pub fn new(
        model: &'a Model,
        prior: &'a dyn PriorDensity,
        data: Option<&'a LabeledDataset>,
        temperature: f64,
    ) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::config("temperature", "must be positive and finite"));
        }
        Ok(Posterior {
            model,
            prior,
            data,
            temperature,
        })
    }

    /// Untempered `log p(D|w) + log p(w)`, also writing its gradient.
    pub fn joint_grad(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let ll = match self.data {
            Some(d) => self.model.log_likelihood_grad(q, d, grad)?,
            None => 0.0,
        };
        let lp = self.prior.log_density_grad(q, grad)?;
        Ok(ll + lp)
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> Result<f64> {
        let v = self.joint_grad(q, grad)?;
        let inv_t = 1.0 / self.temperature;
        grad.iter_mut().for_each(|g| *g *= inv_t);
        Ok(v * inv_t)
    }
}

/// `∇_w [log p(D|w) + log p(w)] / T`.
pub fn grad_log_posterior(
    model: &Model,
    prior: &dyn PriorDensity,
    params: &[f64],
    data: Option<&LabeledDataset>,
    temperature: f64,
) -> Result<Vec<f64>> {
    let post = Posterior::new(model, prior, data, temperature)?;
    let mut g = vec![0.0; params.len()];
    post.log_density_grad(params, &mut g)?;
    Ok(g)
}
