//! Model checkpoints: `CSCM`, version, layer count, then `(fan_in, fan_out)`
//! per layer (all little-endian `u32`), then per layer the row-major weights
//! followed by the biases as little-endian `f32`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{ArchSpec, Layer, Model};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSCM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        let (i, o) = layer.weights.dim();
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(o as u32).to_le_bytes());
    }
    for layer in model.layers() {
        for &w in layer.weights.iter() {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
        for &b in layer.bias.iter() {
            out.extend_from_slice(&(b as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut pos = 0usize;
    let mut word = |what: &str| -> Result<u32> {
        let b = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| Error::invalid(format!("checkpoint truncated reading {what}")))?;
        pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    if bytes.get(0..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::invalid("not a CSCM checkpoint"));
    }
    word("magic")?;
    let version = word("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let count = word("layer count")? as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        shapes.push((word("fan_in")? as usize, word("fan_out")? as usize));
    }
    let mut floats = bytes[pos..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    let needed: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
    if bytes.len() - pos != needed * 4 {
        return Err(Error::invalid(format!(
            "checkpoint holds {} parameter bytes, shapes need {}",
            bytes.len() - pos,
            needed * 4
        )));
    }
    let mut layers = Vec::with_capacity(count);
    for &(i, o) in &shapes {
        let weights = Array2::from_shape_simple_fn((i, o), || floats.next().unwrap_or(0.0));
        let bias = Array1::from_shape_simple_fn(o, || floats.next().unwrap_or(0.0));
        layers.push(Layer { weights, bias });
    }
    if shapes.is_empty() || shapes.windows(2).any(|w| w[0].1 != w[1].0) {
        return Err(Error::invalid("checkpoint layer shapes do not chain"));
    }
    let arch = ArchSpec {
        input: shapes[0].0,
        hidden: shapes[..shapes.len() - 1].iter().map(|s| s.1).collect(),
        output: shapes[shapes.len() - 1].1,
    };
    Model::from_layers(arch, layers)
}

pub fn write_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
