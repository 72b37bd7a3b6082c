//! Binary checkpoint format.
//!
//! ```text
//! magic     8 bytes  "ECVCKPT1"
//! hlen      u32 LE   length of the JSON header
//! header    hlen bytes of UTF-8 JSON (CheckpointMeta)
//! tensors   repeated in canonical order:
//!             u32 LE name length, name bytes,
//!             u32 LE rank, rank x u64 LE dimensions,
//!             elements (product of dimensions) as LE f32 or f64
//! ```
//! Nothing may follow the last tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Network, Scalar};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ECVCKPT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn of<T: Scalar>() -> Self {
        if std::mem::size_of::<T>() == 4 {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub architecture: Architecture,
    pub precision: Precision,
    pub template_topology: String,
    pub seed: u64,
    pub epoch: usize,
    pub steps: u64,
    pub val_loss: Option<f64>,
}

/// A loaded checkpoint; weights are widened to `f64` and can be narrowed
/// back without loss when the file was written in `f32`.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub weights: Network<f64>,
}

impl Checkpoint {
    pub fn network<T: Scalar>(&self) -> Network<T> {
        self.weights.cast(&self.meta.architecture)
    }
}

pub fn save_checkpoint<T: Scalar>(path: &Path, meta: &CheckpointMeta, net: &Network<T>) -> Result<()> {
    let mut meta = meta.clone();
    meta.precision = Precision::of::<T>();
    let header = serde_json::to_vec(&meta).map_err(|e| Error::Validation(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + header.len() + net.param_count() * meta.precision.width());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for ((name, t), shape) in net.named_tensors().into_iter().zip(net.shapes()) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t {
            match meta.precision {
                Precision::F32 => buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes()),
                Precision::F64 => buf.extend_from_slice(&x.as_f64().to_le_bytes()),
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.bad("truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bad(&self, msg: &str) -> Error {
        Error::Validation(format!("checkpoint {}: {msg} at byte {}", self.path.display(), self.pos))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(8)? != MAGIC {
        return Err(cur.bad("bad magic"));
    }
    let hlen = cur.u32()? as usize;
    let meta: CheckpointMeta =
        serde_json::from_slice(cur.take(hlen)?).map_err(|e| cur.bad(&format!("bad header: {e}")))?;
    meta.architecture.validate()?;
    let mut weights = Network::<f64>::zeros(&meta.architecture);
    let names: Vec<String> = weights.named_tensors().into_iter().map(|(n, _)| n).collect();
    let shapes = weights.shapes();
    for ((name, shape), t) in names.iter().zip(&shapes).zip(weights.tensors_mut()) {
        let nlen = cur.u32()? as usize;
        let got = cur.take(nlen)?;
        if got != name.as_bytes() {
            return Err(cur.bad(&format!("expected tensor {name}, found {}", String::from_utf8_lossy(got))));
        }
        let rank = cur.u32()? as usize;
        let dims = (0..rank.min(8)).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(cur.bad(&format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
        }
        let count = t.len();
        let w = meta.precision.width();
        let data = cur.take(count * w)?;
        for (dst, chunk) in t.iter_mut().zip(data.chunks_exact(w)) {
            *dst = match meta.precision {
                Precision::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
                Precision::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
            };
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.bad("trailing bytes"));
    }
    Ok(Checkpoint { meta, weights })
}
