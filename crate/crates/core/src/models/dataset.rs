use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputShape {
    Flat { features: usize },
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl InputShape {
    pub fn len(&self) -> usize {
        match *self {
            InputShape::Flat { features } => features,
            InputShape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Target<'_> {
        match self {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Values(m) => Target::Values(m.row(i)),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Values(m) => Targets::Values(
                Matrix::from_rows(&idx.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>())
                    .expect("rows of an existing matrix"),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target<'a> {
    Class(usize),
    Values(&'a [f64]),
}

/// A planted exact dependence `Σ_j direction_j x_j = offset` satisfied by every
/// generated input. For image data `space` is `patch` and the direction lives in
/// flattened-patch coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedDirection {
    pub kind: String,
    pub space: DirectionSpace,
    pub direction: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSpace {
    Input,
    LogInput,
    Patch,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub planted: Vec<PlantedDirection>,
    #[serde(default)]
    pub corruptions: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub inputs: Matrix,
    pub shape: InputShape,
    pub targets: Targets,
    #[serde(default)]
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(inputs: Matrix, shape: InputShape, targets: Targets) -> Result<Self> {
        let d = LabeledDataset {
            inputs,
            shape,
            targets,
            meta: DatasetMeta::default(),
        };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<()> {
        if self.inputs.rows() == 0 {
            return Err(Error::Shape("dataset has no rows".into()));
        }
        if self.inputs.cols() != self.shape.len() {
            return Err(Error::Shape(format!(
                "inputs have {} columns, shape describes {}",
                self.inputs.cols(),
                self.shape.len()
            )));
        }
        if self.targets.len() != self.inputs.rows() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                self.inputs.rows(),
                self.targets.len()
            )));
        }
        if self.inputs.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset inputs contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(c) => Some(c),
            Targets::Values(_) => None,
        }
    }

    pub fn with_inputs(&self, inputs: Matrix) -> Result<Self> {
        let mut d = self.clone();
        d.inputs = inputs;
        d.check()?;
        Ok(d)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.input(i).to_vec()).collect();
        let mut d = self.clone();
        d.inputs = Matrix::from_rows(&rows)?;
        d.targets = self.targets.subset(idx);
        d.check()?;
        Ok(d)
    }
}
