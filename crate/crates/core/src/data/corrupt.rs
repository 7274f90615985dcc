use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::analysis::PcaBasis;
use crate::error::{Error, Result};
use crate::models::{InputShape, LabeledDataset};
use crate::numkit::{Matrix, RngStream};

/// Which end of the reference spectrum directional noise acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ComponentEnd {
    Lowest,
    Highest,
}

/// Shift multiples of the train-feature standard deviation used as defaults for
/// the two non-zero-mean corruptions.
pub const BRIGHTNESS_SHIFT_STDS: f64 = 1.44;
pub const FOG_SHIFT_STDS: f64 = 0.89;

/// A covariate-shift operator. Targets are never modified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionSpec {
    GaussianNoise { std: f64 },
    ConstantShift { shift: f64 },
    /// Isotropic noise restricted to `count` principal directions of a reference basis.
    PcaDirectionalNoise {
        std: f64,
        end: ComponentEnd,
        count: usize,
    },
    /// Integer roll with zero fill; positive `dx` moves content right, positive `dy` down.
    Translate { dx: i64, dy: i64 },
    FeatureActivate { index: usize, value: f64 },
}

impl CorruptionSpec {
    pub fn validate(&self, path: &str) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{path}.{name}"), "must be finite"))
            }
        };
        match *self {
            CorruptionSpec::GaussianNoise { std } | CorruptionSpec::PcaDirectionalNoise { std, .. } => {
                finite("std", std)?;
                if std < 0.0 {
                    return Err(Error::config(format!("{path}.std"), "must be non-negative"));
                }
                Ok(())
            }
            CorruptionSpec::ConstantShift { shift } => finite("shift", shift),
            CorruptionSpec::Translate { .. } => Ok(()),
            CorruptionSpec::FeatureActivate { value, .. } => finite("value", value),
        }
    }

    /// The same corruption family with its strength parameter replaced.
    pub fn with_magnitude(&self, magnitude: f64) -> CorruptionSpec {
        match *self {
            CorruptionSpec::GaussianNoise { .. } => CorruptionSpec::GaussianNoise { std: magnitude },
            CorruptionSpec::ConstantShift { .. } => CorruptionSpec::ConstantShift { shift: magnitude },
            CorruptionSpec::PcaDirectionalNoise { end, count, .. } => CorruptionSpec::PcaDirectionalNoise {
                std: magnitude,
                end,
                count,
            },
            CorruptionSpec::Translate { dx, dy } => {
                let m = magnitude.round() as i64;
                CorruptionSpec::Translate {
                    dx: dx.signum() * m,
                    dy: dy.signum() * m,
                }
            }
            CorruptionSpec::FeatureActivate { index, .. } => CorruptionSpec::FeatureActivate {
                index,
                value: magnitude,
            },
        }
    }

    fn label(&self) -> String {
        match self {
            CorruptionSpec::GaussianNoise { std } => format!("gaussian_noise(std={std})"),
            CorruptionSpec::ConstantShift { shift } => format!("constant_shift({shift})"),
            CorruptionSpec::PcaDirectionalNoise { std, end, count } => {
                format!("pca_directional_noise(std={std}, {end:?} {count})")
            }
            CorruptionSpec::Translate { dx, dy } => format!("translate({dx}, {dy})"),
            CorruptionSpec::FeatureActivate { index, value } => format!("feature_activate({index}={value})"),
        }
    }
}

/// Applies `spec` to every input. `basis` is required for directional noise.
pub fn corrupt(
    data: &LabeledDataset,
    spec: &CorruptionSpec,
    basis: Option<&PcaBasis>,
    rng: &mut RngStream,
) -> Result<LabeledDataset> {
    spec.validate("corruption")?;
    let (n, m) = (data.inputs.rows(), data.inputs.cols());
    let mut out = data.inputs.clone();
    match *spec {
        CorruptionSpec::GaussianNoise { std } => {
            if std > 0.0 {
                for i in 0..n {
                    for v in out.row_mut(i) {
                        *v += std * rng.normal();
                    }
                }
            }
        }
        CorruptionSpec::ConstantShift { shift } => {
            for i in 0..n {
                out.row_mut(i).iter_mut().for_each(|v| *v += shift);
            }
        }
        CorruptionSpec::PcaDirectionalNoise { std, end, count } => {
            let basis = basis.ok_or_else(|| Error::config("corruption", "directional noise needs a reference basis"))?;
            if basis.dim() != m {
                return Err(Error::Shape(format!(
                    "reference basis has dimension {}, inputs have {m}",
                    basis.dim()
                )));
            }
            if count == 0 || count > m {
                return Err(Error::config("corruption.count", format!("must be in 1..={m}")));
            }
            let idx = match end {
                ComponentEnd::Lowest => basis.lowest(count),
                ComponentEnd::Highest => basis.highest(count),
            };
            let dirs: Vec<Vec<f64>> = idx.iter().map(|&i| basis.component(i)).collect();
            if std > 0.0 {
                for i in 0..n {
                    let row = out.row_mut(i);
                    for d in &dirs {
                        let g = std * rng.normal();
                        for (v, di) in row.iter_mut().zip(d) {
                            *v += g * di;
                        }
                    }
                }
            }
        }
        CorruptionSpec::Translate { dx, dy } => {
            let InputShape::Image {
                height,
                width,
                channels,
            } = data.shape
            else {
                return Err(Error::config("corruption", "translate needs image-shaped inputs"));
            };
            for i in 0..n {
                translate_image(data.input(i), out.row_mut(i), height, width, channels, dx, dy);
            }
        }
        CorruptionSpec::FeatureActivate { index, value } => {
            if index >= m {
                return Err(Error::config("corruption.index", format!("out of range for {m} features")));
            }
            for i in 0..n {
                out.row_mut(i)[index] = value;
            }
        }
    }
    let mut result = data.with_inputs(out)?;
    result.meta.corruptions.push(spec.label());
    Ok(result)
}

fn translate_image(src: &[f64], dst: &mut [f64], h: usize, w: usize, c: usize, dx: i64, dy: i64) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    for y in 0..h as i64 {
        let sy = y - dy;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        for x in 0..w as i64 {
            let sx = x - dx;
            if sx < 0 || sx >= w as i64 {
                continue;
            }
            let d = (y as usize * w + x as usize) * c;
            let s = (sy as usize * w + sx as usize) * c;
            dst[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
}

/// Per-feature standard deviation averaged over features; the unit for
/// shift magnitudes quoted in standard deviations.
pub fn mean_feature_std(inputs: &Matrix) -> f64 {
    let (n, m) = (inputs.rows(), inputs.cols());
    if n < 2 || m == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..m {
        let col = inputs.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        total += var.sqrt();
    }
    total / m as f64
}
