use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::analysis::pca;
use crate::error::{Error, Result};
use crate::models::{DirectionSpace, InputShape, LabeledDataset, PlantedDirection, Targets};
use crate::numkit::{cholesky, dot, solve_lower, solve_lower_transpose, Matrix, RngStream};

/// An exact structural property planted into every generated input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DependenceSpec {
    /// Feature `index` is zero on every input.
    DeadFeature { index: usize },
    /// `direction · x = offset`; `(direction, offset)` is rescaled to unit norm jointly.
    Affine { direction: Vec<f64>, offset: f64 },
    /// Every valid `kernel x kernel` patch `z` satisfies `pattern · z = offset`.
    /// `pattern` is laid out `(dy, dx, channel)`.
    PatchAffine {
        kernel: usize,
        pattern: Vec<f64>,
        offset: f64,
    },
    /// `Π_j x_j^{p_j} = 1` for positive inputs; `p` is rescaled to unit norm.
    Multiplicative { exponents: Vec<f64> },
    /// Feature `index` equals `value` exactly when the label is `class`, else zero.
    Spurious { index: usize, value: f64, class: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// Softmax teacher on random directions inside the data's signal subspace.
    /// Inputs whose standardized top-two logit gap is below `margin` are dropped.
    Teacher {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    /// Real-valued targets `signal * u·x + noise`, or `exp(signal * u·log x) + noise`
    /// for multiplicative data.
    Regression {
        noise_variance: f64,
        #[serde(default = "one")]
        signal: f64,
    },
}

fn default_classes() -> usize {
    2
}
fn default_margin() -> f64 {
    0.5
}
fn default_sharpness() -> f64 {
    8.0
}
fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GeneratorConfig {
    pub shape: InputShape,
    #[serde(default)]
    pub dependences: Vec<DependenceSpec>,
    /// Standard deviation of the base Gaussian draw.
    #[serde(default = "one")]
    pub scale: f64,
    /// Optional per-feature multipliers on `scale`.
    #[serde(default)]
    pub feature_scales: Option<Vec<f64>>,
    pub labels: LabelRule,
}

impl GeneratorConfig {
    pub fn flat(features: usize, labels: LabelRule) -> Self {
        GeneratorConfig {
            shape: InputShape::Flat { features },
            dependences: Vec::new(),
            scale: 1.0,
            feature_scales: None,
            labels,
        }
    }

    pub fn with(mut self, dep: DependenceSpec) -> Self {
        self.dependences.push(dep);
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let m = self.shape.len();
        if m == 0 {
            return Err(Error::config(format!("{path}.shape"), "input shape is empty"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::config(format!("{path}.scale"), "must be positive"));
        }
        if let Some(fs) = &self.feature_scales {
            if fs.len() != m || fs.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config(
                    format!("{path}.feature_scales"),
                    format!("needs {m} positive entries"),
                ));
            }
        }
        let classes = match self.labels {
            LabelRule::Teacher {
                classes,
                margin,
                sharpness,
            } => {
                if classes < 2 {
                    return Err(Error::config(format!("{path}.labels.classes"), "needs at least 2"));
                }
                if !(margin.is_finite() && margin >= 0.0) {
                    return Err(Error::config(format!("{path}.labels.margin"), "must be non-negative"));
                }
                if !(sharpness.is_finite() && sharpness > 0.0) {
                    return Err(Error::config(format!("{path}.labels.sharpness"), "must be positive"));
                }
                Some(classes)
            }
            LabelRule::Regression { noise_variance, signal } => {
                if !(noise_variance.is_finite() && noise_variance >= 0.0) {
                    return Err(Error::config(
                        format!("{path}.labels.noise_variance"),
                        "must be non-negative",
                    ));
                }
                if !signal.is_finite() {
                    return Err(Error::config(format!("{path}.labels.signal"), "must be finite"));
                }
                None
            }
        };
        let (mut linear, mut patch, mut mult) = (0usize, 0usize, 0usize);
        for (i, dep) in self.dependences.iter().enumerate() {
            let p = format!("{path}.dependences[{i}]");
            match dep {
                DependenceSpec::DeadFeature { index } => {
                    linear += 1;
                    if *index >= m {
                        return Err(Error::config(format!("{p}.index"), format!("out of range for {m} features")));
                    }
                }
                DependenceSpec::Affine { direction, offset } => {
                    linear += 1;
                    check_vector(&format!("{p}.direction"), direction, m)?;
                    if !offset.is_finite() {
                        return Err(Error::config(format!("{p}.offset"), "must be finite"));
                    }
                }
                DependenceSpec::PatchAffine {
                    kernel,
                    pattern,
                    offset,
                } => {
                    patch += 1;
                    let InputShape::Image {
                        height,
                        width,
                        channels,
                    } = self.shape
                    else {
                        return Err(Error::config(p, "patch dependence needs image-shaped inputs"));
                    };
                    if *kernel == 0 || *kernel > height || *kernel > width {
                        return Err(Error::config(format!("{p}.kernel"), "kernel does not fit the image"));
                    }
                    check_vector(&format!("{p}.pattern"), pattern, kernel * kernel * channels)?;
                    if !offset.is_finite() {
                        return Err(Error::config(format!("{p}.offset"), "must be finite"));
                    }
                }
                DependenceSpec::Multiplicative { exponents } => {
                    mult += 1;
                    check_vector(&format!("{p}.exponents"), exponents, m)?;
                }
                DependenceSpec::Spurious { index, value, class } => {
                    if *index >= m {
                        return Err(Error::config(format!("{p}.index"), format!("out of range for {m} features")));
                    }
                    if !value.is_finite() {
                        return Err(Error::config(format!("{p}.value"), "must be finite"));
                    }
                    match classes {
                        Some(k) if *class < k => {}
                        Some(_) => return Err(Error::config(format!("{p}.class"), "out of range")),
                        None => return Err(Error::config(p, "spurious features need class labels")),
                    }
                }
            }
        }
        if (linear > 0) as u8 + (patch > 0) as u8 + (mult > 0) as u8 > 1 || patch > 1 || mult > 1 {
            return Err(Error::config(
                format!("{path}.dependences"),
                "input-space, patch-space and multiplicative dependences cannot be combined",
            ));
        }
        if linear >= m {
            return Err(Error::config(
                format!("{path}.dependences"),
                format!("{linear} constraints leave no free direction in {m} features"),
            ));
        }
        Ok(())
    }
}

fn check_vector(path: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::config(path, format!("expected {len} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) || v.iter().all(|x| *x == 0.0) {
        return Err(Error::config(path, "must be finite and not all zero"));
    }
    Ok(())
}

/// Scales `(v, offset)` so that `|v|² + offset² = 1`.
fn joint_unit(v: &[f64], offset: f64) -> (Vec<f64>, f64) {
    let norm = (dot(v, v) + offset * offset).sqrt();
    (v.iter().map(|x| x / norm).collect(), offset / norm)
}

struct LinearConstraints {
    rows: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    gram_factor: Matrix,
    dead: Vec<usize>,
}

impl LinearConstraints {
    fn new(rows: Vec<Vec<f64>>, offsets: Vec<f64>, dead: Vec<usize>) -> Result<Self> {
        let k = rows.len();
        let mut gram = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] = dot(&rows[a], &rows[b]);
            }
        }
        let gram_factor = cholesky(&gram)
            .map_err(|_| Error::config("dependences", "planted directions are linearly dependent"))?;
        Ok(LinearConstraints {
            rows,
            offsets,
            gram_factor,
            dead,
        })
    }

    /// Orthogonal projection onto the affine set `{x : C x = d}`.
    fn project(&self, x: &mut [f64]) -> Result<()> {
        let resid: Vec<f64> = self.rows.iter().zip(&self.offsets).map(|(c, d)| dot(c, x) - d).collect();
        let y = solve_lower(&self.gram_factor, &resid)?;
        let lambda = solve_lower_transpose(&self.gram_factor, &y)?;
        for (c, l) in self.rows.iter().zip(&lambda) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi -= l * ci;
            }
        }
        for &i in &self.dead {
            x[i] = 0.0;
        }
        Ok(())
    }
}

struct PatchConstraint {
    height: usize,
    width: usize,
    channels: usize,
    kernel: usize,
    pattern: Vec<f64>,
    offset: f64,
    pivot: usize,
}

impl PatchConstraint {
    /// Fills pixels in raster order; each valid patch's last nonzero pattern
    /// entry is solved for so the patch meets the constraint exactly.
    fn impose(&self, img: &mut [f64]) -> Result<()> {
        let (k, c, w) = (self.kernel, self.channels, self.width);
        let pdy = self.pivot / (k * c);
        let pdx = (self.pivot / c) % k;
        let pc = self.pivot % c;
        for oy in 0..=self.height - k {
            for ox in 0..=self.width - k {
                let mut acc = 0.0;
                for (q, g) in self.pattern.iter().enumerate().take(self.pivot) {
                    if *g == 0.0 {
                        continue;
                    }
                    let (dy, dx, ch) = (q / (k * c), (q / c) % k, q % c);
                    acc += g * img[((oy + dy) * w + ox + dx) * c + ch];
                }
                let at = ((oy + pdy) * w + ox + pdx) * c + pc;
                img[at] = (self.offset - acc) / self.pattern[self.pivot];
            }
        }
        if img.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
            return Err(Error::Numeric("patch pattern recurrence is unstable".into()));
        }
        Ok(())
    }
}

enum Structure {
    Free,
    Linear(LinearConstraints),
    Patch(PatchConstraint),
    Multiplicative(Vec<f64>),
}

struct Teacher {
    center: Vec<f64>,
    /// One row per class (classification) or a single row (regression).
    directions: Vec<Vec<f64>>,
    scale: f64,
}

/// A fixed generating process: dependences plus a teacher fitted once, so that
/// train and test splits share the labelling rule.
pub struct PlantedTask {
    config: GeneratorConfig,
    structure: Structure,
    spurious: Vec<(usize, f64, usize)>,
    teacher: Teacher,
    planted: Vec<PlantedDirection>,
}

impl PlantedTask {
    pub fn new(config: &GeneratorConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate("generator")?;
        let m = config.shape.len();
        let mut planted = Vec::new();
        let mut spurious = Vec::new();
        let (mut rows, mut offsets, mut dead) = (Vec::new(), Vec::new(), Vec::new());
        let mut structure = Structure::Free;
        for dep in &config.dependences {
            match dep {
                DependenceSpec::DeadFeature { index } => {
                    let mut e = vec![0.0; m];
                    e[*index] = 1.0;
                    rows.push(e.clone());
                    offsets.push(0.0);
                    dead.push(*index);
                    planted.push(PlantedDirection {
                        kind: "dead_feature".into(),
                        space: DirectionSpace::Input,
                        direction: e,
                        offset: 0.0,
                    });
                }
                DependenceSpec::Affine { direction, offset } => {
                    let (c, c0) = joint_unit(direction, *offset);
                    rows.push(c.clone());
                    offsets.push(c0);
                    planted.push(PlantedDirection {
                        kind: "affine".into(),
                        space: DirectionSpace::Input,
                        direction: c,
                        offset: c0,
                    });
                }
                DependenceSpec::PatchAffine {
                    kernel,
                    pattern,
                    offset,
                } => {
                    let InputShape::Image {
                        height,
                        width,
                        channels,
                    } = config.shape
                    else {
                        unreachable!("validated")
                    };
                    let (g, g0) = joint_unit(pattern, *offset);
                    let pivot = g.iter().rposition(|v| *v != 0.0).expect("validated nonzero");
                    planted.push(PlantedDirection {
                        kind: "patch_affine".into(),
                        space: DirectionSpace::Patch,
                        direction: g.clone(),
                        offset: g0,
                    });
                    structure = Structure::Patch(PatchConstraint {
                        height,
                        width,
                        channels,
                        kernel: *kernel,
                        pattern: g,
                        offset: g0,
                        pivot,
                    });
                }
                DependenceSpec::Multiplicative { exponents } => {
                    let (p, _) = joint_unit(exponents, 0.0);
                    planted.push(PlantedDirection {
                        kind: "multiplicative".into(),
                        space: DirectionSpace::LogInput,
                        direction: p.clone(),
                        offset: 0.0,
                    });
                    structure = Structure::Multiplicative(p);
                }
                DependenceSpec::Spurious { index, value, class } => spurious.push((*index, *value, *class)),
            }
        }
        if !rows.is_empty() {
            structure = Structure::Linear(LinearConstraints::new(rows, offsets, dead)?);
        }
        let mut task = PlantedTask {
            config: config.clone(),
            structure,
            spurious,
            teacher: Teacher {
                center: Vec::new(),
                directions: Vec::new(),
                scale: 1.0,
            },
            planted,
        };
        task.teacher = task.fit_teacher(rng)?;
        Ok(task)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn planted(&self) -> &[PlantedDirection] {
        &self.planted
    }

    /// Unit teacher directions in teacher-feature space (one per class, or one for regression).
    pub fn teacher_directions(&self) -> &[Vec<f64>] {
        &self.teacher.directions
    }

    /// Standardized teacher logits for a raw input.
    pub fn teacher_logits(&self, x: &[f64]) -> Vec<f64> {
        self.logits(&self.teacher_features(x))
    }

    fn draw_input(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        let m = self.config.shape.len();
        let mut x = rng.normal_vec(m);
        for (i, v) in x.iter_mut().enumerate() {
            let s = self.config.feature_scales.as_ref().map_or(1.0, |f| f[i]);
            *v *= self.config.scale * s;
        }
        for &(i, _, _) in &self.spurious {
            x[i] = 0.0;
        }
        match &self.structure {
            Structure::Free => {}
            Structure::Linear(c) => c.project(&mut x)?,
            Structure::Patch(p) => p.impose(&mut x)?,
            Structure::Multiplicative(p) => {
                let along = dot(p, &x);
                for (xi, pi) in x.iter_mut().zip(p) {
                    *xi = (*xi - along * pi).exp();
                }
            }
        }
        Ok(x)
    }

    /// Coordinates the teacher reads: inputs, or their logs for multiplicative data.
    fn teacher_features(&self, x: &[f64]) -> Vec<f64> {
        match self.structure {
            Structure::Multiplicative(_) => x.iter().map(|v| v.ln()).collect(),
            _ => x.to_vec(),
        }
    }

    fn fit_teacher(&self, rng: &mut RngStream) -> Result<Teacher> {
        let m = self.config.shape.len();
        let pool = (4 * m).max(200);
        let mut rows = Vec::with_capacity(pool);
        for _ in 0..pool {
            let x = self.draw_input(rng)?;
            rows.push(self.teacher_features(&x));
        }
        let feats = Matrix::from_rows(&rows)?;
        let basis = pca(&feats)?;
        let top = basis.variances.first().copied().unwrap_or(0.0);
        let signal: Vec<usize> = (0..basis.dim()).filter(|&i| basis.variances[i] > 1e-8 * top).collect();
        if signal.is_empty() {
            return Err(Error::Numeric("generated inputs have no variance to label".into()));
        }
        let count = match self.config.labels {
            LabelRule::Teacher { classes, .. } => classes,
            LabelRule::Regression { .. } => 1,
        };
        let mut directions = Vec::with_capacity(count);
        for _ in 0..count {
            let mut u = vec![0.0; m];
            for &i in &signal {
                let g = rng.normal();
                for (ui, vi) in u.iter_mut().zip(basis.component(i)) {
                    *ui += g * vi;
                }
            }
            directions.push(u);
        }
        // contrast the class directions so a one-dimensional signal still separates classes
        if count > 1 {
            let mean: Vec<f64> = (0..m)
                .map(|j| directions.iter().map(|u| u[j]).sum::<f64>() / count as f64)
                .collect();
            for u in &mut directions {
                u.iter_mut().zip(&mean).for_each(|(a, b)| *a -= b);
            }
        }
        for u in &mut directions {
            let norm = dot(u, u).sqrt();
            if !(norm > 0.0) {
                return Err(Error::Numeric("degenerate teacher direction".into()));
            }
            u.iter_mut().for_each(|v| *v /= norm);
        }
        let (center, scale) = match self.config.labels {
            LabelRule::Teacher { .. } => {
                let center = basis.mean.clone();
                let mut ss = 0.0;
                for r in &rows {
                    let c: Vec<f64> = r.iter().zip(&center).map(|(a, b)| a - b).collect();
                    for u in &directions {
                        ss += dot(u, &c).powi(2);
                    }
                }
                (center, (ss / (rows.len() * count) as f64).sqrt().max(1e-300))
            }
            LabelRule::Regression { .. } => (vec![0.0; m], 1.0),
        };
        Ok(Teacher {
            center,
            directions,
            scale,
        })
    }

    fn logits(&self, feats: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = feats.iter().zip(&self.teacher.center).map(|(a, b)| a - b).collect();
        self.teacher
            .directions
            .iter()
            .map(|u| dot(u, &c) / self.teacher.scale)
            .collect()
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<LabeledDataset> {
        if n < 2 {
            return Err(Error::config("n", "need at least 2 rows"));
        }
        let mut rows = Vec::with_capacity(n);
        let targets = match self.config.labels {
            LabelRule::Teacher {
                margin, sharpness, ..
            } => {
                let mut labels = Vec::with_capacity(n);
                let mut tries = 0usize;
                while rows.len() < n {
                    tries += 1;
                    if tries > 1000 * n + 10_000 {
                        return Err(Error::Numeric("teacher margin rejects almost every input".into()));
                    }
                    let x = self.draw_input(rng)?;
                    let z = self.logits(&self.teacher_features(&x));
                    let mut sorted = z.clone();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    if sorted[0] - sorted[1] < margin {
                        continue;
                    }
                    let label = sample_softmax(&z, sharpness, rng);
                    let mut x = x;
                    for &(i, v, class) in &self.spurious {
                        x[i] = if label == class { v } else { 0.0 };
                    }
                    rows.push(x);
                    labels.push(label);
                }
                Targets::Classes(labels)
            }
            LabelRule::Regression { noise_variance, signal } => {
                let mut ys = Vec::with_capacity(n);
                for _ in 0..n {
                    let x = self.draw_input(rng)?;
                    let s = signal * dot(&self.teacher.directions[0], &self.teacher_features(&x));
                    let clean = match self.structure {
                        Structure::Multiplicative(_) => s.exp(),
                        _ => s,
                    };
                    ys.push(vec![clean + noise_variance.sqrt() * rng.normal()]);
                    rows.push(x);
                }
                Targets::Values(Matrix::from_rows(&ys)?)
            }
        };
        let mut data = LabeledDataset::new(Matrix::from_rows(&rows)?, self.config.shape, targets)?;
        data.meta.planted = self.planted.clone();
        for &(i, v, class) in &self.spurious {
            data.meta.notes.push(format!("spurious feature {i} = {v} when label is {class}"));
        }
        Ok(data)
    }
}

fn sample_softmax(z: &[f64], sharpness: f64, rng: &mut RngStream) -> usize {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = z.iter().map(|v| (sharpness * (v - top)).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

/// One-shot generation of `n` labelled inputs.
pub fn gen_planted(config: &GeneratorConfig, n: usize, rng: &mut RngStream) -> Result<LabeledDataset> {
    PlantedTask::new(config, rng)?.sample(n, rng)
}
