use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered blocks tiling `0..len()` without gaps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    pub fn from_shapes(shapes: &[(&str, Vec<usize>)]) -> Self {
        let mut offset = 0;
        let blocks = shapes
            .iter()
            .map(|(name, shape)| {
                let b = Block {
                    name: name.to_string(),
                    shape: shape.clone(),
                    offset,
                };
                offset += b.len();
                b
            })
            .collect();
        Layout { blocks }
    }

    /// Checks that offsets tile the vector exactly.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        let mut expected = 0;
        for b in &blocks {
            if b.offset != expected {
                return Err(Error::Shape(format!(
                    "block `{}` starts at {} but previous blocks end at {expected}",
                    b.name, b.offset
                )));
            }
            expected += b.len();
        }
        Ok(Layout { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.block(name).map(Block::range)
    }

    pub fn first_weight(&self) -> &Block {
        &self.blocks[0]
    }

    /// First-layer bias, if the architecture has one.
    pub fn first_bias(&self) -> Option<&Block> {
        self.block("b1")
    }

    pub fn bias_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.name.starts_with('b'))
    }
}

/// Flat parameter vector plus the layout describing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub data: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(data: Vec<f64>, layout: Layout) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::Shape(format!(
                "layout covers {} parameters, vector has {}",
                layout.len(),
                data.len()
            )));
        }
        Ok(ParamVector { data, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        ParamVector {
            data: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.data[r])
    }

    pub fn first_layer(&self) -> FirstLayerView<'_> {
        FirstLayerView::new(&self.layout, &self.data)
    }
}

/// Read-only view of the first layer as an `(inputs [+ 1]) x units` matrix.
///
/// Column `j` holds the incoming weights of hidden unit (or filter) `j`; the
/// last row is the bias when the layer has one.
#[derive(Clone, Copy, Debug)]
pub struct FirstLayerView<'a> {
    weights: &'a [f64],
    bias: Option<&'a [f64]>,
    inputs: usize,
    units: usize,
}

impl<'a> FirstLayerView<'a> {
    pub fn new(layout: &Layout, params: &'a [f64]) -> Self {
        let w = layout.first_weight();
        let (inputs, units) = match w.shape.as_slice() {
            [i, u] => (*i, *u),
            [i] => (*i, 1),
            _ => (w.len(), 1),
        };
        FirstLayerView {
            weights: &params[w.range()],
            bias: layout.first_bias().map(|b| &params[b.range()]),
            inputs,
            units,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn has_bias(&self) -> bool {
        self.bias.is_some()
    }

    pub fn rows(&self) -> usize {
        self.inputs + usize::from(self.bias.is_some())
    }

    pub fn get(&self, row: usize, unit: usize) -> f64 {
        if row < self.inputs {
            self.weights[row * self.units + unit]
        } else {
            self.bias.expect("row index past weights on a layer without bias")[unit]
        }
    }

    /// Incoming weights of `unit`, bias appended when present.
    pub fn unit_vector(&self, unit: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, unit)).collect()
    }

    /// `Σ_i v_i w_{i,unit}` (plus `v_last · b_unit` when `v` has one extra entry).
    pub fn project(&self, unit: usize, direction: &[f64]) -> Result<f64> {
        if direction.len() != self.inputs && direction.len() != self.rows() {
            return Err(Error::Shape(format!(
                "direction has {} entries, first layer has {} inputs{}",
                direction.len(),
                self.inputs,
                if self.has_bias() { " (+1 bias)" } else { "" }
            )));
        }
        Ok(direction
            .iter()
            .enumerate()
            .map(|(r, v)| v * self.get(r, unit))
            .sum())
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows(), self.units);
        for r in 0..self.rows() {
            for u in 0..self.units {
                m[(r, u)] = self.get(r, u);
            }
        }
        m
    }
}
