use std::path::Path;

use crate::binio::{put_f64s, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::models::{Block, Layout};

use super::hmc::Chain;

const MAGIC: &[u8; 8] = b"SLCHAIN1";
const MAX_NAME: u64 = 256;
const MAX_RANK: u64 = 8;

/// Little-endian: magic, block count, per block `(name len, name, rank,
/// dims..)`, sample count, dimension, then samples row by row.
pub fn encode_samples(layout: &Layout, samples: &[Vec<f64>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * samples.len() * layout.len());
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, layout.blocks().len() as u64);
    for b in layout.blocks() {
        put_u64(&mut out, b.name.len() as u64);
        out.extend_from_slice(b.name.as_bytes());
        put_u64(&mut out, b.shape.len() as u64);
        for &d in &b.shape {
            put_u64(&mut out, d as u64);
        }
    }
    put_u64(&mut out, samples.len() as u64);
    put_u64(&mut out, layout.len() as u64);
    for s in samples {
        put_f64s(&mut out, s);
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Result<(Layout, Vec<Vec<f64>>)> {
    let mut r = ByteReader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format(0, "bad chain sidecar magic"));
    }
    let count_at = r.pos;
    let blocks = r.u64()?;
    // each block needs at least 16 header bytes
    if blocks.saturating_mul(16) > r.remaining() as u64 {
        return Err(Error::format(count_at, format!("{blocks} blocks cannot fit in the file")));
    }
    let mut out = Vec::with_capacity(blocks as usize);
    let mut offset = 0usize;
    for _ in 0..blocks {
        let at = r.pos;
        let len = r.u64()?;
        if len > MAX_NAME {
            return Err(Error::format(at, format!("block name length {len} exceeds {MAX_NAME}")));
        }
        let name = std::str::from_utf8(r.take(len as usize)?)
            .map_err(|_| Error::format(at + 8, "block name is not UTF-8"))?
            .to_string();
        let at = r.pos;
        let rank = r.u64()?;
        if rank > MAX_RANK {
            return Err(Error::format(at, format!("block rank {rank} exceeds {MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut size: usize = 1;
        for _ in 0..rank {
            let at = r.pos;
            let d = usize::try_from(r.u64()?).map_err(|_| Error::format(at, "dimension overflow"))?;
            size = size.checked_mul(d).ok_or_else(|| Error::format(at, "block size overflow"))?;
            shape.push(d);
        }
        out.push(Block { name, shape, offset });
        offset = offset.checked_add(size).ok_or_else(|| Error::format(at, "layout size overflow"))?;
    }
    let layout = Layout::from_blocks(out)?;
    let n = r.u64()?;
    let at = r.pos;
    let dim = r.u64()?;
    if dim != layout.len() as u64 {
        return Err(Error::format(at, format!("dimension {dim} differs from layout size {}", layout.len())));
    }
    let need = (n as u128) * (dim as u128) * 8;
    if need != r.remaining() as u128 {
        return Err(Error::format(
            r.pos,
            format!("{n} samples of dimension {dim} need {need} bytes, found {}", r.remaining()),
        ));
    }
    let mut samples = Vec::with_capacity(n as usize);
    for _ in 0..n {
        samples.push(r.f64s(dim as usize)?);
    }
    Ok((layout, samples))
}

/// Writes `<stem>.bin` (samples) and `<stem>.json` (diagnostics).
pub fn save_chain(chain: &Chain, dir: &Path, stem: &str) -> Result<()> {
    let bin = dir.join(format!("{stem}.bin"));
    std::fs::write(&bin, encode_samples(&chain.layout, &chain.samples)).map_err(|e| Error::io(&bin, e))?;
    let meta = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(chain)?;
    std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

pub fn load_chain(dir: &Path, stem: &str) -> Result<Chain> {
    let meta = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let mut chain: Chain = serde_json::from_str(&text)?;
    let bin = dir.join(format!("{stem}.bin"));
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let (layout, samples) = decode_samples(&bytes)?;
    if layout != chain.layout {
        return Err(Error::format(8, "sidecar layout differs from metadata"));
    }
    chain.samples = samples;
    Ok(chain)
}
