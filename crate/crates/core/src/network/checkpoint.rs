//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "PLXSEGCK"
//! version  u32
//! config   u32 length + UTF-8 JSON of the network configuration
//! count    u32
//! entries  kind u8 (0 parameter, 1 buffer), name (u16 length + UTF-8),
//!          rank u8, dims u32 each, values f32
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::{Layout, ModelParams, NetworkConfig};
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"PLXSEGCK";
const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ModelParams<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&params.config)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    let count = params.params.len() + params.buffers.len();
    w.write_all(&(count as u32).to_le_bytes())?;
    for (kind, map) in [(0u8, &params.params), (1u8, &params.buffers)] {
        for (name, t) in map {
            w.write_all(&[kind])?;
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[t.shape.len() as u8])?;
            for &d in &t.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(4 * t.len());
            for v in &t.data {
                buf.extend_from_slice(&v.to_f32().expect("finite parameter").to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a checkpoint and checks every tensor against the layout implied
/// by its stored configuration.
pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<ModelParams<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut cfg = vec![0u8; len];
    r.read_exact(&mut cfg)?;
    let config: NetworkConfig = serde_json::from_slice(&cfg)?;
    let layout = Layout::for_config(&config)?;

    let count = read_u32(&mut r)? as usize;
    let mut params = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    for _ in 0..count {
        let mut head = [0u8; 3];
        r.read_exact(&mut head)?;
        let kind = head[0];
        let mut name = vec![0u8; u16::from_le_bytes([head[1], head[2]]) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("entry name is not UTF-8"))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let shape = (0..rank[0]).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)?;
        let data: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).expect("f32 converts"))
            .collect();
        let target = match kind {
            0 => &mut params,
            1 => &mut buffers,
            k => return Err(bad(format!("unknown entry kind {k}"))),
        };
        if target.insert(name.clone(), Tensor { shape, data }).is_some() {
            return Err(bad(format!("duplicate entry {name}")));
        }
    }

    if params.len() != layout.params.len() || buffers.len() != layout.buffers.len() {
        return Err(bad("entry count does not match the network layout"));
    }
    for spec in &layout.params {
        match params.get(&spec.name) {
            Some(t) if t.shape == spec.shape => {}
            Some(t) => return Err(bad(format!("{}: shape {:?}, expected {:?}", spec.name, t.shape, spec.shape))),
            None => return Err(bad(format!("missing parameter {}", spec.name))),
        }
    }
    for spec in &layout.buffers {
        match buffers.get(&spec.name) {
            Some(t) if t.shape == [spec.len] => {}
            _ => return Err(bad(format!("missing or misshapen buffer {}", spec.name))),
        }
    }
    let model = ModelParams { config, params, buffers };
    if !model.all_finite() {
        return Err(bad("checkpoint contains non-finite values"));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(params, std::io::BufWriter::new(f))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
