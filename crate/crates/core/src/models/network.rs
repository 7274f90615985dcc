use std::ops::Range;

use crate::error::{Error, Result};

use super::conv::ConvGeometry;
use super::dataset::{LabeledDataset, Target};
use super::params::Layout;
use super::spec::{Activation, Architecture, FeatureMap, Likelihood, Link, ModelSpec};

#[derive(Clone, Debug)]
struct Dense {
    w: Range<usize>,
    b: Range<usize>,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Clone, Debug)]
struct ConvStage {
    geom: ConvGeometry,
    filters: usize,
    pool: bool,
    w: Range<usize>,
    b: Range<usize>,
}

impl ConvStage {
    fn pooled_dims(&self) -> (usize, usize) {
        let (h, w) = (self.geom.out_height(), self.geom.out_width());
        if self.pool {
            (h / 2, w / 2)
        } else {
            (h, w)
        }
    }

    fn flat_len(&self) -> usize {
        let (h, w) = self.pooled_dims();
        h * w * self.filters
    }
}

#[derive(Clone, Debug)]
enum Body {
    Mlp(Vec<Dense>),
    Cnn(ConvStage, Vec<Dense>),
    Nalu { inputs: usize },
    Linear { inputs: usize, outputs: usize, map: FeatureMap },
}

/// A compiled [`ModelSpec`]: parameter layout plus evaluation plan.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    layout: Layout,
    body: Body,
}

fn dense_stack(widths: &[usize], first_index: usize, shapes: &mut Vec<(String, Vec<usize>)>) -> Vec<(usize, usize)> {
    let mut dims = Vec::new();
    for (l, pair) in widths.windows(2).enumerate() {
        let idx = first_index + l;
        shapes.push((format!("W{idx}"), vec![pair[0], pair[1]]));
        shapes.push((format!("b{idx}"), vec![pair[1]]));
        dims.push((pair[0], pair[1]));
    }
    dims
}

fn bind_dense(layout: &Layout, dims: &[(usize, usize)], first_index: usize) -> Vec<Dense> {
    dims.iter()
        .enumerate()
        .map(|(l, &(fan_in, fan_out))| Dense {
            w: layout.range(&format!("W{}", first_index + l)).expect("weight block"),
            b: layout.range(&format!("b{}", first_index + l)).expect("bias block"),
            fan_in,
            fan_out,
        })
        .collect()
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate("model")?;
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        let (layout, body) = match &spec.architecture {
            Architecture::Mlp { widths } => {
                let dims = dense_stack(widths, 1, &mut shapes);
                let layout = layout_of(&shapes);
                let layers = bind_dense(&layout, &dims, 1);
                (layout, Body::Mlp(layers))
            }
            Architecture::Cnn {
                height,
                width,
                channels,
                kernel,
                filters,
                padding,
                pool,
                hidden,
                outputs,
            } => {
                let geom = ConvGeometry::new(*height, *width, *channels, *kernel, *padding)?;
                shapes.push(("W1".into(), vec![geom.patch_len(), *filters]));
                shapes.push(("b1".into(), vec![*filters]));
                let mut stage = ConvStage {
                    geom,
                    filters: *filters,
                    pool: *pool,
                    w: 0..0,
                    b: 0..0,
                };
                if stage.flat_len() == 0 {
                    return Err(Error::config("model.architecture.pool", "pooling leaves no spatial positions"));
                }
                let mut widths = vec![stage.flat_len()];
                widths.extend_from_slice(hidden);
                widths.push(*outputs);
                let dims = dense_stack(&widths, 2, &mut shapes);
                let layout = layout_of(&shapes);
                stage.w = layout.range("W1").expect("conv block");
                stage.b = layout.range("b1").expect("conv bias");
                let layers = bind_dense(&layout, &dims, 2);
                (layout, Body::Cnn(stage, layers))
            }
            Architecture::Nalu { inputs } => {
                shapes.push(("W1".into(), vec![*inputs, 1]));
                (layout_of(&shapes), Body::Nalu { inputs: *inputs })
            }
            Architecture::LinearFeatures {
                inputs,
                feature_map,
                outputs,
            } => {
                shapes.push(("W1".into(), vec![*inputs, *outputs]));
                (
                    layout_of(&shapes),
                    Body::Linear {
                        inputs: *inputs,
                        outputs: *outputs,
                        map: *feature_map,
                    },
                )
            }
        };
        Ok(Model { spec, layout, body })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn link(&self) -> Link {
        self.spec.likelihood.link()
    }

    /// Conv geometry of the first layer, if the model is convolutional.
    pub fn conv_geometry(&self) -> Option<ConvGeometry> {
        match &self.body {
            Body::Cnn(stage, _) => Some(stage.geom),
            _ => None,
        }
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "model has {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model takes {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Network output before the link.
    pub fn logits(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(params, x)?;
        let mut trace = Trace::default();
        self.run_forward(params, x, &mut trace)?;
        Ok(trace.output().to_vec())
    }

    /// Link applied to the logits: class probabilities or the regression mean.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(params, x)?;
        let out = apply_link(self.link(), &z);
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("forward pass produced NaN".into()));
        }
        Ok(out)
    }

    /// First-layer pre-activations at every output position (one row per
    /// position, one column per filter). For dense first layers this is a
    /// single row `x W¹ + b¹`.
    pub fn first_layer_preactivations(&self, params: &[f64], x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check(params, x)?;
        match &self.body {
            Body::Mlp(layers) => {
                let mut out = vec![0.0; layers[0].fan_out];
                dense_apply(&layers[0], params, x, &mut out);
                Ok(vec![out])
            }
            Body::Cnn(stage, _) => {
                let patches = stage.geom.patches(x);
                let mut pre = vec![0.0; stage.geom.positions() * stage.filters];
                conv_apply(stage, params, &patches, &mut pre);
                Ok(pre.chunks(stage.filters).map(<[f64]>::to_vec).collect())
            }
            _ => Err(Error::Domain("model has no hidden first layer".into())),
        }
    }

    pub fn point_log_likelihood(&self, params: &[f64], x: &[f64], target: Target<'_>) -> Result<f64> {
        self.check(params, x)?;
        let mut trace = Trace::default();
        self.run_forward(params, x, &mut trace)?;
        let v = self.log_lik_and_dz(trace.output(), target, None)?;
        if !v.is_finite() {
            return Err(Error::Numeric("point log-likelihood is not finite".into()));
        }
        Ok(v)
    }

    pub fn log_likelihood(&self, params: &[f64], data: &LabeledDataset) -> Result<f64> {
        self.check_data(data)?;
        let mut trace = Trace::default();
        let mut total = 0.0;
        for i in 0..data.len() {
            self.run_forward(params, data.input(i), &mut trace)?;
            total += self.log_lik_and_dz(trace.output(), data.targets.get(i), None)?;
        }
        if !total.is_finite() {
            return Err(Error::Numeric("log-likelihood is not finite".into()));
        }
        Ok(total)
    }

    /// Returns `log p(D | w)` and adds its gradient into `grad`.
    pub fn log_likelihood_grad(&self, params: &[f64], data: &LabeledDataset, grad: &mut [f64]) -> Result<f64> {
        self.check_data(data)?;
        if grad.len() != params.len() {
            return Err(Error::Shape("gradient buffer length differs from parameters".into()));
        }
        let mut trace = Trace::default();
        let mut dz = Vec::new();
        let mut total = 0.0;
        for i in 0..data.len() {
            let x = data.input(i);
            self.run_forward(params, x, &mut trace)?;
            total += self.log_lik_and_dz(trace.output(), data.targets.get(i), Some(&mut dz))?;
            self.run_backward(params, x, &trace, &dz, grad)?;
        }
        if !total.is_finite() {
            return Err(Error::Numeric("log-likelihood is not finite".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("log-likelihood gradient is not finite".into()));
        }
        Ok(total)
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Shape("dataset is empty".into()));
        }
        if data.inputs.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model takes {} inputs, dataset has {}",
                self.input_dim(),
                data.inputs.cols()
            )));
        }
        match (self.spec.likelihood, &data.targets) {
            (Likelihood::Gaussian { .. }, super::Targets::Values(m)) => {
                if m.cols() != self.spec.output_dim() {
                    return Err(Error::Shape(format!(
                        "targets have {} columns, model outputs {}",
                        m.cols(),
                        self.spec.output_dim()
                    )));
                }
            }
            (Likelihood::Gaussian { .. }, _) => {
                return Err(Error::Shape("gaussian likelihood needs real-valued targets".into()))
            }
            (_, super::Targets::Classes(c)) => {
                let k = self.spec.classes();
                if let Some(bad) = c.iter().find(|&&y| y >= k) {
                    return Err(Error::Shape(format!("class {bad} out of range for {k} classes")));
                }
            }
            (_, _) => return Err(Error::Shape("classification likelihood needs class targets".into())),
        }
        Ok(())
    }

    fn log_lik_and_dz(&self, z: &[f64], target: Target<'_>, dz: Option<&mut Vec<f64>>) -> Result<f64> {
        match (self.spec.likelihood, target) {
            (Likelihood::Categorical, Target::Class(y)) => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
                let lse = m + s.ln();
                if let Some(dz) = dz {
                    dz.clear();
                    dz.extend(z.iter().map(|v| -(v - lse).exp()));
                    dz[y] += 1.0;
                }
                Ok(z[y] - lse)
            }
            (Likelihood::Bernoulli, Target::Class(y)) => {
                let t = z[0];
                if let Some(dz) = dz {
                    dz.clear();
                    dz.push(y as f64 - sigmoid(t));
                }
                Ok(if y == 1 { -softplus(-t) } else { -softplus(t) })
            }
            (Likelihood::Gaussian { variance }, Target::Values(y)) => {
                let norm = -0.5 * (2.0 * std::f64::consts::PI * variance).ln();
                let mut ll = 0.0;
                for (zk, yk) in z.iter().zip(y) {
                    ll += norm - (yk - zk).powi(2) / (2.0 * variance);
                }
                if let Some(dz) = dz {
                    dz.clear();
                    dz.extend(z.iter().zip(y).map(|(zk, yk)| (yk - zk) / variance));
                }
                Ok(ll)
            }
            _ => Err(Error::Shape("target kind does not match likelihood".into())),
        }
    }

    fn run_forward(&self, params: &[f64], x: &[f64], t: &mut Trace) -> Result<()> {
        let act = self.spec.activation;
        t.reset();
        match &self.body {
            Body::Mlp(layers) => {
                t.post.push(x.to_vec());
                dense_forward(layers, params, act, t);
            }
            Body::Cnn(stage, layers) => {
                t.patches.clear();
                stage.geom.extract_into(x, &mut t.patches);
                let mut pre = vec![0.0; stage.geom.positions() * stage.filters];
                conv_apply(stage, params, &t.patches, &mut pre);
                let post: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
                let flat = if stage.pool { pool_forward(stage, &post) } else { post.clone() };
                t.conv_pre = pre;
                t.conv_post = post;
                t.post.push(flat);
                dense_forward(layers, params, act, t);
            }
            Body::Nalu { inputs } => {
                let w = &params[self.layout.first_weight().range()];
                let mut log_out = 0.0;
                t.features.clear();
                for j in 0..*inputs {
                    if !(x[j] > 0.0) {
                        return Err(Error::Domain(format!("nalu input {j} is {} (must be > 0)", x[j])));
                    }
                    let l = x[j].ln();
                    t.features.push(l);
                    log_out += w[j] * l;
                }
                t.post.push(vec![log_out.exp()]);
            }
            Body::Linear { inputs, outputs, map } => {
                let w = &params[self.layout.first_weight().range()];
                t.features.clear();
                for (j, &v) in x.iter().enumerate().take(*inputs) {
                    t.features.push(match map {
                        FeatureMap::Identity => v,
                        FeatureMap::Log => {
                            if !(v > 0.0) {
                                return Err(Error::Domain(format!("log feature {j} of non-positive input {v}")));
                            }
                            v.ln()
                        }
                    });
                }
                let mut z = vec![0.0; *outputs];
                for (j, f) in t.features.iter().enumerate() {
                    for (k, zk) in z.iter_mut().enumerate() {
                        *zk += f * w[j * outputs + k];
                    }
                }
                t.post.push(z);
            }
        }
        if t.output().iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("forward pass produced NaN".into()));
        }
        Ok(())
    }

    fn run_backward(&self, params: &[f64], _x: &[f64], t: &Trace, dz: &[f64], grad: &mut [f64]) -> Result<()> {
        let act = self.spec.activation;
        match &self.body {
            Body::Mlp(layers) => {
                dense_backward(layers, params, act, t, dz, grad, false);
            }
            Body::Cnn(stage, layers) => {
                let g_flat = dense_backward(layers, params, act, t, dz, grad, true);
                let g_post = if stage.pool { pool_backward(stage, &g_flat) } else { g_flat };
                let f = stage.filters;
                let plen = stage.geom.patch_len();
                for pos in 0..stage.geom.positions() {
                    let patch = &t.patches[pos * plen..(pos + 1) * plen];
                    for j in 0..f {
                        let g = g_post[pos * f + j] * act.derivative(t.conv_pre[pos * f + j]);
                        if g == 0.0 {
                            continue;
                        }
                        grad[stage.b.start + j] += g;
                        for (k, pk) in patch.iter().enumerate() {
                            grad[stage.w.start + k * f + j] += pk * g;
                        }
                    }
                }
            }
            Body::Nalu { .. } => {
                let z = t.output()[0];
                let r = self.layout.first_weight().range();
                for (j, l) in t.features.iter().enumerate() {
                    grad[r.start + j] += dz[0] * z * l;
                }
            }
            Body::Linear { outputs, .. } => {
                let r = self.layout.first_weight().range();
                for (j, f) in t.features.iter().enumerate() {
                    for k in 0..*outputs {
                        grad[r.start + j * outputs + k] += f * dz[k];
                    }
                }
            }
        }
        Ok(())
    }
}

fn layout_of(shapes: &[(String, Vec<usize>)]) -> Layout {
    let refs: Vec<(&str, Vec<usize>)> = shapes.iter().map(|(n, s)| (n.as_str(), s.clone())).collect();
    Layout::from_shapes(&refs)
}

#[derive(Default)]
struct Trace {
    /// Inputs to each dense layer followed by the final output.
    post: Vec<Vec<f64>>,
    /// Pre-activations of each dense layer.
    pre: Vec<Vec<f64>>,
    patches: Vec<f64>,
    conv_pre: Vec<f64>,
    conv_post: Vec<f64>,
    features: Vec<f64>,
}

impl Trace {
    fn reset(&mut self) {
        self.post.clear();
        self.pre.clear();
    }

    fn output(&self) -> &[f64] {
        self.post.last().expect("forward pass ran")
    }
}

fn dense_apply(layer: &Dense, params: &[f64], input: &[f64], out: &mut [f64]) {
    let w = &params[layer.w.clone()];
    out.copy_from_slice(&params[layer.b.clone()]);
    for (i, &xi) in input.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * layer.fan_out..(i + 1) * layer.fan_out];
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

fn dense_forward(layers: &[Dense], params: &[f64], act: Activation, t: &mut Trace) {
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let mut pre = vec![0.0; layer.fan_out];
        dense_apply(layer, params, t.post.last().expect("layer input"), &mut pre);
        let post = if l == last {
            pre.clone()
        } else {
            pre.iter().map(|&v| act.apply(v)).collect()
        };
        t.pre.push(pre);
        t.post.push(post);
    }
}

/// Backpropagates `dz` through the dense stack; returns the gradient with
/// respect to the stack input when `want_input` is set.
fn dense_backward(
    layers: &[Dense],
    params: &[f64],
    act: Activation,
    t: &Trace,
    dz: &[f64],
    grad: &mut [f64],
    want_input: bool,
) -> Vec<f64> {
    let last = layers.len() - 1;
    let mut g_post = dz.to_vec();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let g_pre: Vec<f64> = if l == last {
            g_post
        } else {
            g_post
                .iter()
                .zip(&t.pre[l])
                .map(|(g, &z)| g * act.derivative(z))
                .collect()
        };
        let input = &t.post[l];
        for (j, g) in g_pre.iter().enumerate() {
            grad[layer.b.start + j] += g;
        }
        for (i, &xi) in input.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let base = layer.w.start + i * layer.fan_out;
            for (j, g) in g_pre.iter().enumerate() {
                grad[base + j] += xi * g;
            }
        }
        if l == 0 && !want_input {
            return Vec::new();
        }
        let w = &params[layer.w.clone()];
        g_post = (0..layer.fan_in)
            .map(|i| {
                let row = &w[i * layer.fan_out..(i + 1) * layer.fan_out];
                row.iter().zip(&g_pre).map(|(a, b)| a * b).sum()
            })
            .collect();
    }
    g_post
}

fn conv_apply(stage: &ConvStage, params: &[f64], patches: &[f64], out: &mut [f64]) {
    let f = stage.filters;
    let plen = stage.geom.patch_len();
    let w = &params[stage.w.clone()];
    let b = &params[stage.b.clone()];
    for pos in 0..stage.geom.positions() {
        let patch = &patches[pos * plen..(pos + 1) * plen];
        let o = &mut out[pos * f..(pos + 1) * f];
        o.copy_from_slice(b);
        for (k, &pk) in patch.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            for (oj, wkj) in o.iter_mut().zip(&w[k * f..(k + 1) * f]) {
                *oj += pk * wkj;
            }
        }
    }
}

fn pool_forward(stage: &ConvStage, post: &[f64]) -> Vec<f64> {
    let (ph, pw) = stage.pooled_dims();
    let ow = stage.geom.out_width();
    let f = stage.filters;
    let mut out = vec![0.0; ph * pw * f];
    for py in 0..ph {
        for px in 0..pw {
            for j in 0..f {
                let mut s = 0.0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    s += post[((2 * py + dy) * ow + 2 * px + dx) * f + j];
                }
                out[(py * pw + px) * f + j] = 0.25 * s;
            }
        }
    }
    out
}

fn pool_backward(stage: &ConvStage, g: &[f64]) -> Vec<f64> {
    let (ph, pw) = stage.pooled_dims();
    let ow = stage.geom.out_width();
    let f = stage.filters;
    let mut out = vec![0.0; stage.geom.positions() * f];
    for py in 0..ph {
        for px in 0..pw {
            for j in 0..f {
                let v = 0.25 * g[(py * pw + px) * f + j];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    out[((2 * py + dy) * ow + 2 * px + dx) * f + j] = v;
                }
            }
        }
    }
    out
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub fn apply_link(link: Link, z: &[f64]) -> Vec<f64> {
    match link {
        Link::Softmax => {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        }
        Link::Logistic => {
            let p = sigmoid(z[0]);
            vec![1.0 - p, p]
        }
        Link::Identity => z.to_vec(),
    }
}
