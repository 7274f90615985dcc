use std::collections::BTreeMap;

use crate::analysis::{
    corruption_spectrum, effective_sample_size, evaluate, is_separable, limiting_logits, max_abs_projection, mean, pca,
    predictive_probs, project_first_layer, robustness_curve, variance, PcaBasis, Predictor, ProbeDirection,
};
use crate::data::{
    corrupt, extract_patches, image_geometry, mean_feature_std, select_positions, translation_safe_positions,
    CorruptionSpec,
};
use crate::error::{Error, Result};
use crate::inference::{argmax, leapfrog_trajectory};
use crate::models::{
    max_gradient_error, Architecture, FeatureMap, FirstLayerView, InputShape, LabeledDataset, Likelihood, LogDensity,
    Model, ModelSpec, Posterior, Targets,
};
use crate::numkit::{Matrix, RngStream};
use crate::oracle::{blr_posterior, grid_posterior, normalized_on_axis, rotation_with_first_column, uniform_axis};
use crate::priors::{default_eps, Family, FirstLayerConfig, Prior};

use super::config::{AnalysisConfig, MagnitudeUnit, ProbeSpec, SpectrumSpace};
use super::output::Cell;
use super::run::{Context, Tables};

type Measurements = BTreeMap<String, f64>;

/// Gradient checks ignore coordinates whose gradient is below this in magnitude.
const GRADIENT_FLOOR: f64 = 1e-3;

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// First-layer probe directions for a layout, resolved against the training data.
fn resolve_probes(specs: &[ProbeSpec], view: FirstLayerView<'_>, train: &LabeledDataset) -> Result<Vec<ProbeDirection>> {
    let mut out = Vec::new();
    for spec in specs {
        match spec {
            ProbeSpec::Planted => {
                if train.meta.planted.is_empty() {
                    return Err(Error::config("probes", "training data has no planted dependence"));
                }
                for (k, p) in train.meta.planted.iter().enumerate() {
                    if p.direction.len() != view.inputs() {
                        return Err(Error::Shape(format!(
                            "planted direction has {} entries, first layer has {} inputs",
                            p.direction.len(),
                            view.inputs()
                        )));
                    }
                    let label = format!("{}{k}", p.kind);
                    if view.has_bias() {
                        out.push(ProbeDirection::affine(label, &p.direction, p.offset));
                    } else if p.offset == 0.0 {
                        out.push(ProbeDirection {
                            label,
                            vector: p.direction.clone(),
                        });
                    } else {
                        return Err(Error::config("probes", "an affine offset needs a first-layer bias"));
                    }
                }
            }
            ProbeSpec::Feature { index } => {
                if *index >= view.inputs() {
                    return Err(Error::config("probes.index", format!("out of range for {} inputs", view.inputs())));
                }
                let mut v = vec![0.0; view.inputs()];
                v[*index] = 1.0;
                out.push(ProbeDirection {
                    label: format!("feature{index}"),
                    vector: v,
                });
            }
            ProbeSpec::Vector { label, vector } => out.push(ProbeDirection {
                label: label.clone(),
                vector: vector.clone(),
            }),
        }
    }
    Ok(out)
}

fn probes_for(specs: &[ProbeSpec], prior: &Prior, train: &LabeledDataset) -> Result<Vec<ProbeDirection>> {
    let zeros = vec![0.0; prior.dim()];
    resolve_probes(specs, FirstLayerView::new(prior.layout(), &zeros), train)
}

pub fn run_analysis(
    ctx: &Context<'_>,
    id: &str,
    a: &AnalysisConfig,
    rng: &mut RngStream,
    m: &mut Measurements,
    tables: &mut Tables,
) -> Result<()> {
    let key = |s: &str| format!("{id}.{s}");
    match a {
        AnalysisConfig::PriorMatch { fit, probes, thresholds } => {
            let f = ctx.fit(fit)?;
            let probes = probes_for(probes, &f.prior, &f.train)?;
            let report = project_first_layer(&f.prior, &f.params, &probes, thresholds, rng)?;
            for d in &report.directions {
                let t = &d.test;
                m.insert(key(&format!("{}.z", d.label)), t.z);
                m.insert(key(&format!("{}.variance_ratio", d.label)), t.variance_ratio);
                m.insert(key(&format!("{}.ks", d.label)), t.ks);
                m.insert(key(&format!("{}.pass", d.label)), flag(t.pass));
                tables.projections.push(vec![
                    id.into(),
                    fit.as_str().into(),
                    d.label.as_str().into(),
                    d.units.into(),
                    t.samples.into(),
                    t.effective_samples.into(),
                    t.mean.into(),
                    t.variance.into(),
                    t.prior_variance.into(),
                    t.z.into(),
                    t.variance_ratio.into(),
                    t.ks.into(),
                    "".into(),
                    t.pass.into(),
                ]);
            }
            m.insert(key("all_pass"), flag(report.all_pass()));
        }
        AnalysisConfig::Projection { fit, probes } => {
            let f = ctx.fit(fit)?;
            let layout = f.prior.layout();
            let mut overall = 0.0f64;
            for p in probes_for(probes, &f.prior, &f.train)? {
                let mut worst = 0.0f64;
                for w in &f.params {
                    worst = worst.max(max_abs_projection(layout, w, &p.vector)?);
                }
                overall = overall.max(worst);
                m.insert(key(&format!("{}.max_abs", p.label)), worst);
                let blank = || Cell::from("");
                let units = FirstLayerView::new(layout, &f.params[0]).units();
                tables.projections.push(vec![
                    id.into(),
                    fit.as_str().into(),
                    p.label.as_str().into(),
                    units.into(),
                    f.params.len().into(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    worst.into(),
                    blank(),
                ]);
            }
            m.insert(key("max_abs"), overall);
        }
        AnalysisConfig::Evaluate { fits } => {
            let model = ctx.model()?;
            let test = &ctx.data()?.test;
            for name in fits {
                let b = evaluate(model, ctx.fit(name)?.predictor(), test)?;
                m.insert(key(&format!("{name}.accuracy")), b.accuracy);
                m.insert(key(&format!("{name}.nll")), b.nll);
                m.insert(key(&format!("{name}.ece")), b.ece);
                tables.metric_row(id, name, 0.0, &b);
            }
        }
        AnalysisConfig::Robustness {
            fits,
            corruption,
            magnitudes,
            unit,
        } => {
            let model = ctx.model()?;
            let data = ctx.data()?;
            let scale = unit_scale(*unit, &data.train);
            let mags: Vec<f64> = magnitudes.iter().map(|v| v * scale).collect();
            let basis = basis_for(corruption, &data.train.inputs)?;
            let preds: Vec<(String, Predictor<'_>)> = fits
                .iter()
                .map(|n| Ok((n.clone(), ctx.fit(n)?.predictor())))
                .collect::<Result<_>>()?;
            let rows = robustness_curve(model, &preds, &data.test, corruption, &mags, basis.as_ref(), rng)?;
            let last = mags.len() - 1;
            for (i, chunk) in rows.chunks(preds.len()).enumerate() {
                for r in chunk {
                    let p = &r.predictor;
                    m.insert(key(&format!("{p}.m{i}.accuracy")), r.metrics.accuracy);
                    m.insert(key(&format!("{p}.m{i}.nll")), r.metrics.nll);
                    m.insert(key(&format!("{p}.m{i}.ece")), r.metrics.ece);
                    if i == last {
                        m.insert(key(&format!("{p}.final.accuracy")), r.metrics.accuracy);
                        m.insert(key(&format!("{p}.final.nll")), r.metrics.nll);
                        m.insert(key(&format!("{p}.final.ece")), r.metrics.ece);
                    }
                    tables.metric_row(id, p, r.magnitude, &r.metrics);
                }
            }
            for p in fits {
                let drop = m[&key(&format!("{p}.m0.accuracy"))] - m[&key(&format!("{p}.final.accuracy"))];
                m.insert(key(&format!("{p}.drop")), drop);
            }
            m.insert(key("final_magnitude"), mags[last]);
        }
        AnalysisConfig::Spectrum { corruption, space, unit } => {
            spectrum(ctx, id, corruption, *space, *unit, rng, m, tables)?;
        }
        AnalysisConfig::ConjugateOracle { hmc, map } => conjugate(ctx, id, hmc, map, m)?,
        AnalysisConfig::GridMarginal {
            prior,
            axes,
            axis,
            rotate_to,
        } => {
            let model = ctx.model()?;
            let train = &ctx.data()?.train;
            let prior = ctx.prior(prior)?;
            let d = model.num_params();
            let rotation = match rotate_to {
                Some(spec) => {
                    let probes = probes_for(std::slice::from_ref(spec), &prior, train)?;
                    let v = &probes
                        .first()
                        .ok_or_else(|| Error::config("rotate_to", "resolved to no direction"))?
                        .vector;
                    if v.len() != d {
                        return Err(Error::config(
                            "rotate_to",
                            format!("direction has {} entries, model has {d} parameters", v.len()),
                        ));
                    }
                    Some(rotation_with_first_column(v)?)
                }
                None => None,
            };
            // variance of each grid coordinate under a coordinate-wise Gaussian prior
            let coord_var: Vec<f64> = (0..d)
                .map(|i| {
                    prior
                        .coordinate_variance(i)
                        .ok_or_else(|| Error::config("prior", "grid comparison needs an i.i.d. Gaussian prior"))
                })
                .collect::<Result<_>>()?;
            let axis_var = |k: usize| -> f64 {
                match &rotation {
                    Some(r) => (0..d).map(|i| r[(i, k)].powi(2) * coord_var[i]).sum(),
                    None => coord_var[k],
                }
            };
            let grids: Vec<Vec<f64>> = axes.iter().map(|a| uniform_axis(a.lo, a.hi, a.nodes)).collect();
            let coverage = axes
                .iter()
                .enumerate()
                .map(|(k, a)| a.hi.min(-a.lo) / axis_var(k).sqrt())
                .fold(f64::INFINITY, f64::min);
            let grid = grid_posterior(model, &prior, Some(train), grids, rotation.as_ref())?;
            let marginal = grid.marginal(*axis);
            let v = axis_var(*axis);
            let reference = normalized_on_axis(&grid.axes[*axis], |u| (-0.5 * u * u / v).exp());
            let sup = marginal
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            m.insert(key("sup_error"), sup);
            m.insert(key("peak_density"), reference.iter().copied().fold(0.0, f64::max));
            m.insert(key("coverage_in_std"), coverage);
        }
        AnalysisConfig::TemperedVariance { fit } => {
            let f = ctx.fit(fit)?;
            let chain = f.chain().ok_or_else(|| Error::config("fit", "needs a sampler fit"))?;
            let t = chain.config.temperature;
            let mut ratios = Vec::with_capacity(f.prior.dim());
            for i in 0..f.prior.dim() {
                let pv = f
                    .prior
                    .coordinate_variance(i)
                    .ok_or_else(|| Error::config("prior", "needs an i.i.d. Gaussian prior"))?;
                let col: Vec<f64> = f.params.iter().map(|w| w[i]).collect();
                ratios.push(variance(&col) / (pv * t));
            }
            m.insert(key("mean_ratio"), mean(&ratios));
            m.insert(key("min_ratio"), ratios.iter().copied().fold(f64::INFINITY, f64::min));
            m.insert(key("max_ratio"), ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            m.insert(key("max_rel_error"), ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max));
        }
        AnalysisConfig::PriorVariance { prior, probes } => {
            let train = &ctx.data()?.train;
            let built = ctx.prior(prior)?;
            let eps = match ctx.cfg.priors[prior].first_layer {
                Some(FirstLayerConfig::EmpCov { alpha, eps, .. }) | Some(FirstLayerConfig::PcaDecay { alpha, eps, .. }) => {
                    Some(eps.unwrap_or_else(|| default_eps(alpha)))
                }
                _ => None,
            };
            for p in probes_for(probes, &built, train)? {
                let v = built
                    .first_layer_projection_variance(&p.vector)
                    .ok_or_else(|| Error::config("prior", "projection variance needs a Gaussian first layer"))?;
                m.insert(key(&format!("{}.variance", p.label)), v);
                if let Some(e) = eps {
                    m.insert(key(&format!("{}.ratio_to_eps", p.label)), v / e);
                }
            }
        }
        AnalysisConfig::FeatureSweep {
            map,
            hmc,
            feature,
            values,
            compare,
            far,
            separation,
        } => {
            let model = ctx.model()?;
            let test = &ctx.data()?.test;
            let (map_fit, chain) = (ctx.fit(map)?, ctx.fit(hmc)?);
            let at = |v: f64| -> Result<Matrix> {
                let mut x = test.inputs.clone();
                if *feature >= x.cols() {
                    return Err(Error::config("feature", "out of range"));
                }
                for i in 0..x.rows() {
                    x[(i, *feature)] = v;
                }
                Ok(x)
            };
            let base = at(values[0])?;
            let map_base = predictive_probs(model, map_fit.predictor(), &base)?;
            let mut changes = 0usize;
            for &v in &values[1..] {
                let p = predictive_probs(model, map_fit.predictor(), &at(v)?)?;
                changes += (0..p.rows()).filter(|&i| argmax(p.row(i)) != argmax(map_base.row(i))).count();
            }
            m.insert(key("map_changes"), changes as f64);
            let shifted = at(*compare)?;
            let tv = |a: &Matrix, b: &Matrix| -> f64 {
                let per: Vec<f64> = (0..a.rows())
                    .map(|i| 0.5 * a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y).abs()).sum::<f64>())
                    .collect();
                mean(&per)
            };
            let map_shift = predictive_probs(model, map_fit.predictor(), &shifted)?;
            m.insert(key("map_tv"), tv(&map_base, &map_shift));
            let bma_base = predictive_probs(model, chain.predictor(), &base)?;
            let bma_shift = predictive_probs(model, chain.predictor(), &shifted)?;
            m.insert(key("bma_tv"), tv(&bma_base, &bma_shift));

            let far_x = at(*far)?;
            let (mut separable, mut checked, mut mismatches) = (0usize, 0usize, 0usize);
            for w in &chain.params {
                let z = limiting_logits(model, w, *feature)?;
                if !is_separable(&z, *separation) {
                    continue;
                }
                separable += 1;
                let want = argmax(&z);
                for i in 0..far_x.rows() {
                    checked += 1;
                    mismatches += usize::from(argmax(&model.logits(w, far_x.row(i))?) != want);
                }
            }
            m.insert(key("separable_samples"), separable as f64);
            m.insert(key("limit_checked"), checked as f64);
            m.insert(key("limit_mismatches"), mismatches as f64);
        }
        AnalysisConfig::ConvShift { prior, shifts, draws } => {
            let model = ctx.model()?;
            let test = &ctx.data()?.test;
            let prior = ctx.prior(prior)?;
            let images = test.len().min(16);
            let mut worst = 0.0f64;
            for _ in 0..*draws {
                let w = prior.sample(rng);
                let view = FirstLayerView::new(model.layout(), &w);
                let sums: Vec<f64> = (0..view.units())
                    .map(|u| (0..view.inputs()).map(|r| view.get(r, u)).sum())
                    .collect();
                for i in 0..images {
                    let x = test.input(i);
                    let base = model.first_layer_preactivations(&w, x)?;
                    for &c in shifts {
                        let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
                        let moved = model.first_layer_preactivations(&w, &xs)?;
                        for (pb, pm) in base.iter().zip(&moved) {
                            for f in 0..pb.len() {
                                worst = worst.max((pm[f] - pb[f] - c * sums[f]).abs());
                            }
                        }
                    }
                }
            }
            m.insert(key("max_error"), worst);
        }
        AnalysisConfig::GradientCheck { models, step } => {
            let mut overall = 0.0f64;
            for (i, spec) in models.iter().enumerate() {
                let err = gradient_check(spec, *step, &mut rng.derive(i as u64))?;
                m.insert(key(&format!("{i}.max_relative_error")), err);
                overall = overall.max(err);
            }
            m.insert(key("max_relative_error"), overall);
        }
        AnalysisConfig::Reversibility {
            prior,
            step_size,
            steps,
            trials,
        } => {
            let model = ctx.model()?;
            let train = &ctx.data()?.train;
            let prior = ctx.prior(prior)?;
            let post = Posterior::new(model, &prior, Some(train), 1.0)?;
            let (mut worst, mut energy) = (0.0f64, 0.0f64);
            for _ in 0..*trials {
                let q = prior.sample(rng);
                let p = rng.normal_vec(q.len());
                let fwd = leapfrog_trajectory(&post, &q, &p, *step_size, *steps)?;
                let flipped: Vec<f64> = fwd.momentum.iter().map(|v| -v).collect();
                let back = leapfrog_trajectory(&post, &fwd.position, &flipped, *step_size, *steps)?;
                if fwd.diverged || back.diverged {
                    return Err(Error::Numeric("leapfrog diverged during the reversibility check".into()));
                }
                let scale = q.iter().map(|v| v.abs()).fold(1.0, f64::max);
                let err = q
                    .iter()
                    .zip(&back.position)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(err / scale);
                let h = |lp: f64, mom: &[f64]| -lp + 0.5 * mom.iter().map(|v| v * v).sum::<f64>();
                let mut g = vec![0.0; q.len()];
                let start = post.log_density_grad(&q, &mut g)?;
                energy = energy.max((h(fwd.log_density, &fwd.momentum) - h(start, &p)).abs());
            }
            m.insert(key("max_error"), worst);
            m.insert(key("max_energy_error"), energy);
        }
    }
    Ok(())
}

fn unit_scale(unit: MagnitudeUnit, train: &LabeledDataset) -> f64 {
    match unit {
        MagnitudeUnit::Absolute => 1.0,
        MagnitudeUnit::TrainStd => mean_feature_std(&train.inputs),
    }
}

fn basis_for(corruption: &CorruptionSpec, inputs: &Matrix) -> Result<Option<PcaBasis>> {
    match corruption {
        CorruptionSpec::PcaDirectionalNoise { .. } => Ok(Some(pca(inputs)?)),
        _ => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn spectrum(
    ctx: &Context<'_>,
    id: &str,
    corruption: &CorruptionSpec,
    space: SpectrumSpace,
    unit: MagnitudeUnit,
    rng: &mut RngStream,
    m: &mut Measurements,
    tables: &mut Tables,
) -> Result<()> {
    let key = |s: &str| format!("{id}.{s}");
    let data = ctx.data()?;
    let scale = unit_scale(unit, &data.train);
    let spec = match corruption {
        CorruptionSpec::Translate { .. } => corruption.clone(),
        CorruptionSpec::GaussianNoise { std } => corruption.with_magnitude(std * scale),
        CorruptionSpec::ConstantShift { shift } => corruption.with_magnitude(shift * scale),
        CorruptionSpec::PcaDirectionalNoise { std, .. } => corruption.with_magnitude(std * scale),
        CorruptionSpec::FeatureActivate { .. } => corruption.clone(),
    };
    let input_basis = basis_for(&spec, &data.train.inputs)?;
    let corrupted = corrupt(&data.test, &spec, input_basis.as_ref(), rng)?;
    let (basis, clean, moved) = match space {
        SpectrumSpace::Input => (
            match input_basis {
                Some(b) => b,
                None => pca(&data.train.inputs)?,
            },
            data.test.inputs.clone(),
            corrupted.inputs.clone(),
        ),
        SpectrumSpace::Patch { kernel } => {
            let geom = image_geometry(data.test.shape, kernel, false)?;
            let mask = match spec {
                CorruptionSpec::Translate { dx, dy } => translation_safe_positions(&geom, dx, dy),
                _ => vec![true; geom.positions()],
            };
            if !mask.iter().any(|&k| k) {
                return Err(Error::config("space", "no patch position survives the translation"));
            }
            let patches = |x: &Matrix| extract_patches(x, data.test.shape, kernel, false);
            (
                pca(&patches(&data.train.inputs)?)?,
                select_positions(&patches(&data.test.inputs)?, &mask)?,
                select_positions(&patches(&corrupted.inputs)?, &mask)?,
            )
        }
    };
    let rows = corruption_spectrum(&clean, &moved, &basis)?;
    let n = clean.rows() as f64;
    let reference_mean = mean(&basis.variances);
    let mut max_z = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &rows {
        let inc = r.after - r.before;
        lo = lo.min(inc);
        hi = hi.max(inc);
        if let CorruptionSpec::GaussianNoise { std } = spec {
            // sd of var(a + e) - var(a) with e ~ N(0, s²) independent of a
            let s2 = std * std;
            let sd = ((2.0 * s2 * s2 + 4.0 * r.before * s2) / (n - 1.0)).sqrt();
            max_z = max_z.max((inc - s2).abs() / sd);
        }
        tables.spectrum.push(vec![
            id.into(),
            r.component.into(),
            r.reference.into(),
            r.before.into(),
            r.after.into(),
            inc.into(),
        ]);
    }
    let bottom = rows.last().expect("non-empty basis");
    m.insert(key("min_increase"), lo);
    m.insert(key("max_increase"), hi);
    m.insert(key("reference_mean"), reference_mean);
    m.insert(key("bottom.reference"), bottom.reference);
    m.insert(key("bottom.increase"), bottom.after - bottom.before);
    m.insert(key("bottom.relative_increase"), (bottom.after - bottom.before) / reference_mean);
    if let CorruptionSpec::GaussianNoise { std } = spec {
        m.insert(key("noise_variance"), std * std);
        m.insert(key("max_abs_z"), max_z);
    }
    m.insert(key("rows"), n);
    Ok(())
}

fn conjugate(ctx: &Context<'_>, id: &str, hmc: &str, map: &str, m: &mut Measurements) -> Result<()> {
    let key = |s: &str| format!("{id}.{s}");
    let model = ctx.model()?;
    let (h, mp) = (ctx.fit(hmc)?, ctx.fit(map)?);
    let noise = match model.spec().likelihood {
        Likelihood::Gaussian { variance } => variance,
        _ => return Err(Error::config("model.likelihood", "conjugate oracle needs a Gaussian likelihood")),
    };
    let chain = h.chain().ok_or_else(|| Error::config("hmc", "needs a sampler fit"))?;
    if chain.config.temperature != 1.0 {
        return Err(Error::config("hmc.temperature", "conjugate comparison needs temperature 1"));
    }
    let feature_map = match model.spec().architecture {
        Architecture::LinearFeatures { feature_map, .. } => feature_map,
        _ => return Err(Error::config("model", "needs a linear-features model")),
    };
    let features = |x: &Matrix| -> Matrix {
        let mut out = x.clone();
        if feature_map == FeatureMap::Log {
            for i in 0..out.rows() {
                out.row_mut(i).iter_mut().for_each(|v| *v = v.ln());
            }
        }
        out
    };
    let d = model.num_params();
    let prior_var: Vec<f64> = (0..d)
        .map(|i| {
            h.prior
                .coordinate_variance(i)
                .ok_or_else(|| Error::config("prior", "needs an i.i.d. Gaussian prior"))
        })
        .collect::<Result<_>>()?;
    let targets = match &h.train.targets {
        Targets::Values(v) => v.column(0),
        Targets::Classes(_) => return Err(Error::config("data", "needs real-valued targets")),
    };
    let post = blr_posterior(
        &features(&h.train.inputs),
        &targets,
        &vec![0.0; d],
        &Matrix::from_diag(&prior_var),
        noise,
    )?;
    let mut max_z = 0.0f64;
    let mut emp = Matrix::zeros(d, d);
    let means: Vec<f64> = (0..d)
        .map(|i| mean(&h.params.iter().map(|w| w[i]).collect::<Vec<_>>()))
        .collect();
    for i in 0..d {
        let col: Vec<f64> = h.params.iter().map(|w| w[i]).collect();
        let se = (variance(&col) / effective_sample_size(&col)).sqrt();
        max_z = max_z.max((means[i] - post.mean[i]).abs() / se);
    }
    let n = h.params.len() as f64;
    for w in &h.params {
        for a in 0..d {
            for b in 0..d {
                emp[(a, b)] += (w[a] - means[a]) * (w[b] - means[b]) / (n - 1.0);
            }
        }
    }
    let cov_err = emp.sub(&post.covariance)?.frobenius() / post.covariance.frobenius();
    let map_err = mp.params[0]
        .iter()
        .zip(&post.mean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    m.insert(key("max_mean_z"), max_z);
    m.insert(key("covariance_rel_error"), cov_err);
    m.insert(key("map_max_abs_error"), map_err);
    m.insert(key("samples"), n);
    Ok(())
}

/// Worst relative gradient error of a random small problem for `spec`.
fn gradient_check(spec: &ModelSpec, step: f64, rng: &mut RngStream) -> Result<f64> {
    let model = Model::new(spec.clone())?;
    let n = 6;
    let positive = matches!(
        spec.architecture,
        Architecture::Nalu { .. }
            | Architecture::LinearFeatures {
                feature_map: FeatureMap::Log,
                ..
            }
    );
    let m = model.input_dim();
    let mut x = Matrix::zeros(n, m);
    for i in 0..n {
        for v in x.row_mut(i) {
            let z = rng.normal();
            *v = if positive { (0.5 * z).exp() } else { z };
        }
    }
    let shape = match spec.architecture {
        Architecture::Cnn {
            height,
            width,
            channels,
            ..
        } => InputShape::Image {
            height,
            width,
            channels,
        },
        _ => InputShape::Flat { features: m },
    };
    let targets = if spec.likelihood.is_classification() {
        Targets::Classes((0..n).map(|_| rng.below(spec.classes())).collect())
    } else {
        let k = spec.output_dim();
        Targets::Values(Matrix::from_vec(n, k, rng.normal_vec(n * k))?)
    };
    let data = LabeledDataset::new(x, shape, targets)?;
    let prior = Prior::iid(Family::Gaussian { variance: 1.0 }, &model)?;
    let post = Posterior::new(&model, &prior, Some(&data), 1.0)?;
    let scale = if positive { 0.3 } else { 1.0 };
    let q: Vec<f64> = prior.sample(rng).into_iter().map(|v| v * scale).collect();
    max_gradient_error(&post, &q, step, GRADIENT_FLOOR)
}
