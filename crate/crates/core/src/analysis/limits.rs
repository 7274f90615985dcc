use crate::error::{Error, Result};
use crate::models::{Architecture, Model};

/// Direction the logits grow along as feature `feature` is pushed to `+∞`:
/// the network applied to the unit vector `e_feature` with every bias removed.
/// Valid for dense networks with positively homogeneous activations.
pub fn limiting_logits(model: &Model, params: &[f64], feature: usize) -> Result<Vec<f64>> {
    if !matches!(model.spec().architecture, Architecture::Mlp { .. }) {
        return Err(Error::Domain("limiting logits are defined for dense networks".into()));
    }
    if feature >= model.input_dim() {
        return Err(Error::Shape(format!("feature {feature} out of range")));
    }
    let mut w = params.to_vec();
    for b in model.layout().bias_blocks() {
        w[b.range()].iter_mut().for_each(|v| *v = 0.0);
    }
    let mut e = vec![0.0; model.input_dim()];
    e[feature] = 1.0;
    model.logits(&w, &e)
}

/// True when the largest entry beats every other entry by at least `eps`.
pub fn is_separable(z: &[f64], eps: f64) -> bool {
    let top = crate::inference::argmax(z);
    z.iter().enumerate().all(|(i, v)| i == top || z[top] - v >= eps)
}
