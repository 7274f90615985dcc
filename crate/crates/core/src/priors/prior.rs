use std::ops::Range;

use crate::error::{Error, Result};
use crate::models::{LabeledDataset, Layout, Model, PriorDensity};
use crate::numkit::{Matrix, RngStream};

use super::config::{default_eps, Family, FirstLayerConfig, PriorConfig};
use super::covariance::{build_empcov, build_pca_prior, CovariancePrior};
use super::family::{exp_norm_logpdf_grad, sample_exp_norm, sign};
use super::sumfilter::sample_filter;

#[derive(Clone, Debug)]
enum Term {
    /// One family over the union of `ranges` (i.i.d. per coordinate, or a
    /// joint norm for exp_norm).
    Family { family: Family, ranges: Vec<Range<usize>> },
    /// Per-unit Gaussian over first-layer columns (plus bias when the prior has one).
    Units {
        prior: CovariancePrior,
        weights: Range<usize>,
        bias: Option<Range<usize>>,
        units: usize,
    },
    /// Gaussian filter weights plus a Laplace factor on every filter sum.
    FilterSums {
        variance: f64,
        gamma_sq: f64,
        weights: Range<usize>,
        patch_len: usize,
        filters: usize,
    },
}

/// A fully bound prior over a model's parameter vector.
#[derive(Clone, Debug)]
pub struct Prior {
    layout: Layout,
    terms: Vec<Term>,
    scale_hint: f64,
}

fn complement(len: usize, taken: &[Range<usize>]) -> Vec<Range<usize>> {
    let mut sorted = taken.to_vec();
    sorted.sort_by_key(|r| r.start);
    let mut out = Vec::new();
    let mut at = 0;
    for r in sorted {
        if r.start > at {
            out.push(at..r.start);
        }
        at = at.max(r.end);
    }
    if at < len {
        out.push(at..len);
    }
    out
}

impl Prior {
    /// Binds `config` to `model`. Data-dependent first-layer priors read the
    /// training inputs (or, for conv models, their patches).
    pub fn build(config: &PriorConfig, model: &Model, train: Option<&LabeledDataset>) -> Result<Self> {
        config.validate("prior")?;
        let layout = model.layout().clone();
        let w1 = layout.first_weight().clone();
        let b1 = layout.first_bias().cloned();
        let (inputs_per_unit, units) = match w1.shape.as_slice() {
            [i, u] => (*i, *u),
            _ => (w1.len(), 1),
        };
        let mut terms = Vec::new();
        let mut taken: Vec<Range<usize>> = Vec::new();
        let mut first_scale = None;
        if let Some(fl) = config.first_layer {
            let needs_hidden = model.spec().input_dim() > 0 && b1.is_some();
            if !needs_hidden {
                return Err(Error::config(
                    "prior.first_layer",
                    "first-layer priors need a hidden first layer with a bias",
                ));
            }
            match fl {
                FirstLayerConfig::EmpCov {
                    alpha,
                    eps,
                    center,
                    bias_variance,
                } => {
                    let rows = first_layer_rows(model, train)?;
                    let eps = eps.unwrap_or_else(|| default_eps(alpha));
                    let prior = build_empcov(&rows, alpha, eps, center, bias_variance, true)?;
                    first_scale = Some(prior.scale_hint());
                    let b = b1.clone().expect("checked").range();
                    taken.push(w1.range());
                    taken.push(b.clone());
                    terms.push(Term::Units {
                        prior,
                        weights: w1.range(),
                        bias: Some(b),
                        units,
                    });
                }
                FirstLayerConfig::PcaDecay { alpha, eps, decay } => {
                    let rows = first_layer_rows(model, train)?;
                    let eps = eps.unwrap_or_else(|| default_eps(alpha));
                    let prior = build_pca_prior(&rows, alpha, eps, decay)?;
                    first_scale = Some(prior.scale_hint());
                    taken.push(w1.range());
                    terms.push(Term::Units {
                        prior,
                        weights: w1.range(),
                        bias: None,
                        units,
                    });
                }
                FirstLayerConfig::SumFilter { variance, gamma_sq } => {
                    if model.conv_geometry().is_none() {
                        return Err(Error::config(
                            "prior.first_layer",
                            "sum_filter applies to convolutional first layers only",
                        ));
                    }
                    first_scale = Some(variance.sqrt());
                    taken.push(w1.range());
                    terms.push(Term::FilterSums {
                        variance,
                        gamma_sq,
                        weights: w1.range(),
                        patch_len: inputs_per_unit,
                        filters: units,
                    });
                }
            }
        }
        let rest = complement(layout.len(), &taken);
        let rest_len: usize = rest.iter().map(|r| r.len()).sum();
        if rest_len > 0 {
            terms.push(Term::Family {
                family: config.default,
                ranges: rest,
            });
        }
        let scale_hint = first_scale.unwrap_or_else(|| config.default.scale_hint(rest_len));
        Ok(Prior {
            layout,
            terms,
            scale_hint,
        })
    }

    /// Shorthand for an i.i.d. family over every coordinate.
    pub fn iid(family: Family, model: &Model) -> Result<Self> {
        Self::build(
            &PriorConfig {
                default: family,
                first_layer: None,
            },
            model,
            None,
        )
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    /// Prior standard deviation used for trajectory lengths: that of the
    /// first-layer term (`sqrt(mean eigenvalue)` for covariance priors).
    pub fn scale_hint(&self) -> f64 {
        self.scale_hint
    }

    pub fn covariance_prior(&self) -> Option<&CovariancePrior> {
        self.terms.iter().find_map(|t| match t {
            Term::Units { prior, .. } => Some(prior),
            _ => None,
        })
    }

    pub fn log_density(&self, w: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; w.len()];
        self.log_density_grad(w, &mut g)
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for term in &self.terms {
            match term {
                Term::Family { family, ranges } => match *family {
                    Family::ExpNorm { power, variance } => {
                        let n: usize = ranges.iter().map(|r| r.len()).sum();
                        let draw = sample_exp_norm(power, variance, n, rng);
                        let mut it = draw.into_iter();
                        for r in ranges {
                            for i in r.clone() {
                                out[i] = it.next().expect("draw length");
                            }
                        }
                    }
                    _ => {
                        for r in ranges {
                            for i in r.clone() {
                                out[i] = family.sample_scalar(rng);
                            }
                        }
                    }
                },
                Term::Units {
                    prior,
                    weights,
                    bias,
                    units,
                } => {
                    for j in 0..*units {
                        let (w, b) = prior.sample_unit(rng);
                        for (k, v) in w.iter().enumerate() {
                            out[weights.start + k * units + j] = *v;
                        }
                        if let (Some(br), Some(b)) = (bias, b) {
                            out[br.start + j] = b;
                        }
                    }
                }
                Term::FilterSums {
                    variance,
                    gamma_sq,
                    weights,
                    patch_len,
                    filters,
                } => {
                    for j in 0..*filters {
                        let (w, _) = sample_filter(*patch_len, *variance, *gamma_sq, rng);
                        for (k, v) in w.iter().enumerate() {
                            out[weights.start + k * filters + j] = *v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Variance of `direction · (w_j, b_j)` for one first-layer unit when the
    /// prior is Gaussian on that block; `None` otherwise.
    pub fn first_layer_projection_variance(&self, direction: &[f64]) -> Option<f64> {
        let w1 = self.layout.first_weight();
        let inputs = w1.shape[0];
        let b1 = self.layout.first_bias().map(|b| b.range());
        for term in &self.terms {
            match term {
                Term::Units { prior, bias, .. } => {
                    let (dw, db) = direction.split_at(inputs.min(direction.len()));
                    let db = db.first().copied().unwrap_or(0.0);
                    // u·w + db·b = (u - db·μ)·w + db·(b + μ·w)
                    let mut eff = dw.to_vec();
                    let mut var = 0.0;
                    if let (Some(bv), Some(_)) = (prior.bias_variance, bias) {
                        for (e, mu) in eff.iter_mut().zip(&prior.mean) {
                            *e -= db * mu;
                        }
                        var += db * db * bv;
                    } else if db != 0.0 {
                        var += db * db * self.coordinate_variance(b1.clone()?.start)?;
                    }
                    return Some(var + prior.weight_variance_along(&eff).ok()?);
                }
                Term::FilterSums { .. } => return None,
                Term::Family { .. } => {}
            }
        }
        // plain family on the first layer
        let mut var = 0.0;
        for (r, d) in direction.iter().enumerate() {
            let idx = if r < inputs { w1.offset + r * w1.shape.get(1).copied().unwrap_or(1) } else { b1.clone()?.start };
            var += d * d * self.coordinate_variance(idx)?;
        }
        Some(var)
    }

    /// Marginal variance of coordinate `i` under an i.i.d. Gaussian term.
    pub fn coordinate_variance(&self, i: usize) -> Option<f64> {
        self.terms.iter().find_map(|t| match t {
            Term::Family {
                family: Family::Gaussian { variance },
                ranges,
            } if ranges.iter().any(|r| r.contains(&i)) => Some(*variance),
            _ => None,
        })
    }
}

/// Rows a first-layer covariance is estimated from: inputs for dense first
/// layers, every patch of every image for conv first layers.
pub fn first_layer_rows(model: &Model, train: Option<&LabeledDataset>) -> Result<Matrix> {
    let data = train.ok_or_else(|| Error::config("prior.first_layer", "data-dependent prior needs training data"))?;
    match model.conv_geometry() {
        None => Ok(data.inputs.clone()),
        Some(geom) => {
            let mut flat = Vec::with_capacity(data.len() * geom.positions() * geom.patch_len());
            for i in 0..data.len() {
                geom.extract_into(data.input(i), &mut flat);
            }
            Matrix::from_vec(data.len() * geom.positions(), geom.patch_len(), flat)
        }
    }
}

impl PriorDensity for Prior {
    fn log_density_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        if w.len() != self.dim() || grad.len() != self.dim() {
            return Err(Error::Shape(format!(
                "prior covers {} parameters, got {}",
                self.dim(),
                w.len()
            )));
        }
        let mut lp = 0.0;
        for term in &self.terms {
            match term {
                Term::Family { family, ranges } => match *family {
                    Family::ExpNorm { power, variance } => {
                        let idx: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
                        let sub: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
                        let mut g = vec![0.0; sub.len()];
                        lp += exp_norm_logpdf_grad(power, variance, &sub, &mut g);
                        for (&i, gi) in idx.iter().zip(g) {
                            grad[i] += gi;
                        }
                    }
                    _ => {
                        for r in ranges {
                            for i in r.clone() {
                                let (l, g) = family.scalar_logpdf_grad(w[i]);
                                lp += l;
                                grad[i] += g;
                            }
                        }
                    }
                },
                Term::Units {
                    prior,
                    weights,
                    bias,
                    units,
                } => {
                    let d = prior.dim();
                    let mut col = vec![0.0; d];
                    let mut gcol = vec![0.0; d];
                    for j in 0..*units {
                        for k in 0..d {
                            col[k] = w[weights.start + k * units + j];
                        }
                        gcol.iter_mut().for_each(|g| *g = 0.0);
                        let mut gb = 0.0;
                        let b = bias.as_ref().map(|r| w[r.start + j]);
                        lp += prior.unit_logpdf_grad(&col, b, &mut gcol, Some(&mut gb))?;
                        for k in 0..d {
                            grad[weights.start + k * units + j] += gcol[k];
                        }
                        if let Some(r) = bias {
                            grad[r.start + j] += gb;
                        }
                    }
                }
                Term::FilterSums {
                    variance,
                    gamma_sq,
                    weights,
                    patch_len,
                    filters,
                } => {
                    let gauss = Family::Gaussian { variance: *variance };
                    for i in weights.clone() {
                        let (l, g) = gauss.scalar_logpdf_grad(w[i]);
                        lp += l;
                        grad[i] += g;
                    }
                    for j in 0..*filters {
                        let s: f64 = (0..*patch_len).map(|k| w[weights.start + k * filters + j]).sum();
                        lp += -(2.0 * gamma_sq).ln() - s.abs() / gamma_sq;
                        let g = -sign(s) / gamma_sq;
                        for k in 0..*patch_len {
                            grad[weights.start + k * filters + j] += g;
                        }
                    }
                }
            }
        }
        if !lp.is_finite() {
            return Err(Error::Numeric("prior log-density is not finite".into()));
        }
        Ok(lp)
    }
}

/// Sum-filter prior over a conv model: Gaussian `variance` on filter weights,
/// Laplace(`gamma_sq`) on each filter sum, `default` elsewhere.
pub fn build_sumfilter(variance: f64, gamma_sq: f64, default: Family, model: &Model) -> Result<Prior> {
    Prior::build(
        &PriorConfig {
            default,
            first_layer: Some(FirstLayerConfig::SumFilter { variance, gamma_sq }),
        },
        model,
        None,
    )
}

