use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{put_f64s, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::models::{DatasetMeta, InputShape, LabeledDataset, Targets};
use crate::numkit::Matrix;

const MAGIC: &[u8; 8] = b"SLDATA01";
const CLASSES: u64 = 0;
const VALUES: u64 = 1;

/// JSON side of the cache; the arrays live in the binary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub shape: InputShape,
    pub rows: usize,
    pub meta: DatasetMeta,
}

pub fn encode_arrays(inputs: &Matrix, targets: &Targets) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    put_u64(&mut out, inputs.rows() as u64);
    put_u64(&mut out, inputs.cols() as u64);
    put_f64s(&mut out, inputs.data());
    match targets {
        Targets::Classes(c) => {
            put_u64(&mut out, CLASSES);
            put_u64(&mut out, 1);
            c.iter().for_each(|&k| put_u64(&mut out, k as u64));
        }
        Targets::Values(m) => {
            put_u64(&mut out, VALUES);
            put_u64(&mut out, m.cols() as u64);
            put_f64s(&mut out, m.data());
        }
    }
    out
}

/// Inverse of [`encode_arrays`]; rejects anything malformed with its byte offset.
pub fn decode_arrays(bytes: &[u8]) -> Result<(Matrix, Targets)> {
    let mut r = ByteReader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format(0, "not a dataset cache"));
    }
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let at = r.pos;
    let len = rows
        .checked_mul(cols)
        .filter(|l| l.checked_mul(8).is_some_and(|b| b <= r.remaining()))
        .ok_or_else(|| Error::format(at, "input block larger than file"))?;
    let inputs = Matrix::from_vec(rows, cols, r.f64s(len)?)?;
    let kind_at = r.pos;
    let kind = r.u64()?;
    let tcols = r.u64()? as usize;
    let targets = match kind {
        CLASSES => {
            if tcols != 1 {
                return Err(Error::format(kind_at + 8, "class targets must have one column"));
            }
            let mut c = Vec::with_capacity(rows.min(r.remaining() / 8));
            for _ in 0..rows {
                let at = r.pos;
                let k = r.u64()?;
                c.push(usize::try_from(k).map_err(|_| Error::format(at, "class index too large"))?);
            }
            Targets::Classes(c)
        }
        VALUES => {
            let at = r.pos;
            let len = rows
                .checked_mul(tcols)
                .filter(|l| l.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::format(at, "target block larger than file"))?;
            Targets::Values(Matrix::from_vec(rows, tcols, r.f64s(len)?)?)
        }
        other => return Err(Error::format(kind_at, format!("unknown target kind {other}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::format(r.pos, "trailing bytes"));
    }
    Ok((inputs, targets))
}

pub fn save_dataset(data: &LabeledDataset, dir: &Path, stem: &str) -> Result<()> {
    let desc = DatasetDescriptor {
        shape: data.shape,
        rows: data.len(),
        meta: data.meta.clone(),
    };
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(&desc)?).map_err(|e| Error::io(&json, e))?;
    let bin = dir.join(format!("{stem}.bin"));
    std::fs::write(&bin, encode_arrays(&data.inputs, &data.targets)).map_err(|e| Error::io(&bin, e))
}

pub fn decode_dataset(descriptor: &str, bytes: &[u8]) -> Result<LabeledDataset> {
    let desc: DatasetDescriptor = serde_json::from_str(descriptor)?;
    let (inputs, targets) = decode_arrays(bytes)?;
    if inputs.rows() != desc.rows {
        return Err(Error::format(8, "row count differs from descriptor"));
    }
    let mut data = LabeledDataset::new(inputs, desc.shape, targets)?;
    data.meta = desc.meta;
    Ok(data)
}

pub fn load_dataset(dir: &Path, stem: &str) -> Result<LabeledDataset> {
    let json = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let bin = dir.join(format!("{stem}.bin"));
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    decode_dataset(&text, &bytes)
}
