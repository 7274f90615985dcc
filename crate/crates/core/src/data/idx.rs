use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::models::{InputShape, LabeledDataset, Targets};
use crate::numkit::Matrix;

const UNSIGNED_BYTE: u8 = 0x08;
const MAX_DIMS: usize = 4;

/// An unsigned-byte IDX array (the MNIST distribution format).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses a big-endian unsigned-byte IDX file held in memory.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let mut r = ByteReader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(Error::format(0, "bad IDX magic"));
    }
    if magic[2] != UNSIGNED_BYTE {
        return Err(Error::format(2, format!("unsupported IDX element type 0x{:02x}", magic[2])));
    }
    let rank = magic[3] as usize;
    if rank == 0 || rank > MAX_DIMS {
        return Err(Error::format(3, format!("unsupported IDX rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let raw = r.take(4)?;
        dims.push(u32::from_be_bytes(raw.try_into().expect("4 bytes")) as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(4, "IDX dimensions overflow"))?;
    let at = r.pos;
    if r.remaining() != count {
        return Err(Error::format(
            at,
            format!("IDX header promises {count} bytes, found {}", r.remaining()),
        ));
    }
    Ok(IdxArray {
        dims,
        data: r.take(count)?.to_vec(),
    })
}

/// Pairs an image array `(n, h, w)` with a label vector `(n)`; pixels scaled to `[0, 1]`.
pub fn idx_dataset(images: &IdxArray, labels: &IdxArray) -> Result<LabeledDataset> {
    let [n, h, w] = images.dims[..] else {
        return Err(Error::format(3, format!("image file has rank {}, expected 3", images.dims.len())));
    };
    let [nl] = labels.dims[..] else {
        return Err(Error::format(3, format!("label file has rank {}, expected 1", labels.dims.len())));
    };
    if n != nl {
        return Err(Error::format(4, format!("{n} images but {nl} labels")));
    }
    let pixels: Vec<f64> = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    let inputs = Matrix::from_vec(n, h * w, pixels)?;
    let targets = Targets::Classes(labels.data.iter().map(|&b| b as usize).collect());
    LabeledDataset::new(
        inputs,
        InputShape::Image {
            height: h,
            width: w,
            channels: 1,
        },
        targets,
    )
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    idx_dataset(&parse_idx(&read(images)?)?, &parse_idx(&read(labels)?)?)
}

/// Per-feature centering and scaling fitted on training inputs only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Features with zero spread keep unit scale so they stay constant.
    pub fn fit(inputs: &Matrix) -> Result<Self> {
        let (n, m) = (inputs.rows(), inputs.cols());
        if n < 2 {
            return Err(Error::config("inputs", "standardizer needs at least 2 rows"));
        }
        let mut mean = vec![0.0; m];
        let mut std = vec![0.0; m];
        for j in 0..m {
            let col = inputs.column(j);
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            mean[j] = mu;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.inputs.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, data has {}",
                self.mean.len(),
                data.inputs.cols()
            )));
        }
        let mut x = data.inputs.clone();
        for i in 0..x.rows() {
            for ((v, mu), s) in x.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / s;
            }
        }
        data.with_inputs(x)
    }
}
