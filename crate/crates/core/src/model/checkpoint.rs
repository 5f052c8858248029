//! Parameter checkpoints.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! b"FMIACKPT"            8 bytes
//! version: u32           currently 1
//! n_dims: u32
//! dims: n_dims x u64     layer_dims, input first
//! params: f64 ...        per layer: weights row-major (out x in), then bias
//! ```
//!
//! The text layout carries the same information: a `fedmia-checkpoint 1`
//! line, a `dims d0 d1 ...` line, then one parameter per line in the same
//! order, printed with the shortest representation that parses back to the
//! identical `f64`.

use std::fmt::Write as _;
use std::path::Path;

use super::DenseNet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FMIACKPT";
const VERSION: u32 = 1;
const TEXT_HEADER: &str = "fedmia-checkpoint 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointFormat {
    Binary,
    Text,
}

pub fn encode_checkpoint(net: &DenseNet, format: CheckpointFormat) -> Vec<u8> {
    let dims = net.layer_dims();
    match format {
        CheckpointFormat::Binary => {
            let mut out = Vec::with_capacity(16 + 8 * dims.len() + 8 * net.num_params());
            out.extend_from_slice(MAGIC);
            out.extend_from_slice(&VERSION.to_le_bytes());
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for d in &dims {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
            out
        }
        CheckpointFormat::Text => {
            let mut out = String::new();
            out.push_str(TEXT_HEADER);
            out.push_str("\ndims");
            for d in &dims {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            for p in net.params() {
                let _ = writeln!(out, "{p:?}");
            }
            out.into_bytes()
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<DenseNet> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else if bytes.starts_with(TEXT_HEADER.as_bytes()) {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        decode_text(text)
    } else {
        Err(Error::Checkpoint("unrecognized header".into()))
    }
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let chunk = bytes
        .get(*pos..*pos + n)
        .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {pos}")))?;
    *pos += n;
    Ok(chunk)
}

fn decode_binary(bytes: &[u8]) -> Result<DenseNet> {
    let mut pos = MAGIC.len();
    let u32_at = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(bytes, pos, 4)?.try_into().expect("4 bytes")))
    };
    let version = u32_at(&mut pos)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_dims = u32_at(&mut pos)? as usize;
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        let d = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
        dims.push(usize::try_from(d).map_err(|_| Error::Checkpoint("dimension overflow".into()))?);
    }
    let rest = &bytes[pos..];
    if rest.len() % 8 != 0 {
        return Err(Error::Checkpoint("parameter block is not a whole number of f64".into()));
    }
    let params: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseNet::from_flat(&dims, &params).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn decode_text(text: &str) -> Result<DenseNet> {
    let mut lines = text.lines().skip(1);
    let dims_line = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("missing dims line".into()))?;
    let dims = dims_line
        .strip_prefix("dims")
        .ok_or_else(|| Error::Checkpoint("second line must start with `dims`".into()))?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad dims: {e}")))?;
    let params = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad parameter: {e}")))?;
    DenseNet::from_flat(&dims, &params).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(net: &DenseNet, path: impl AsRef<Path>, format: CheckpointFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(net, format)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DenseNet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
