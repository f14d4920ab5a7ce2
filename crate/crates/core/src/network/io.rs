//! NETP model files.
//!
//! ```text
//! "NETP"
//! u32 depth, u32 kernel_size, u32 input_height, u32 input_width
//! u32 channels[depth]
//! f64 payload: for each layer in canonical order, weights (out×in×k×k)
//!              then biases (out)
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{ArchSpec, NetParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NETP";

pub fn encode(params: &NetParams) -> Result<Vec<u8>> {
    let a = &params.arch;
    let mut out = Vec::with_capacity(4 + 4 * (4 + a.depth) + params.count() * 8);
    out.extend_from_slice(MAGIC);
    let ints = [a.depth, a.kernel_size, a.input_height, a.input_width]
        .into_iter()
        .chain(a.channels.iter().copied());
    for v in ints {
        let v = u32::try_from(v)
            .map_err(|_| Error::format("architecture", format!("{v} exceeds u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in &params.layers {
        for v in layer.weight.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<NetParams> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "expected NETP"));
    }
    let mut pos = 4;
    let mut read_u32 = |field: &'static str| -> Result<usize> {
        let b = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| Error::format(field, "truncated header"))?;
        pos += 4;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    };
    let depth = read_u32("depth")?;
    let kernel_size = read_u32("kernel_size")?;
    let input_height = read_u32("input_height")?;
    let input_width = read_u32("input_width")?;
    if depth > 16 {
        return Err(Error::format("depth", format!("{depth} is implausible")));
    }
    let channels = (0..depth)
        .map(|_| read_u32("channels"))
        .collect::<Result<Vec<_>>>()?;
    let arch = ArchSpec {
        depth,
        channels,
        kernel_size,
        input_height,
        input_width,
    };
    arch.validate()
        .map_err(|e| Error::format("architecture", e.to_string()))?;
    let mut params = NetParams::zeros(&arch)?;
    let payload = &bytes[pos..];
    if payload.len() != params.count() * 8 {
        return Err(Error::format(
            "payload",
            format!(
                "expected {} bytes, found {}",
                params.count() * 8,
                payload.len()
            ),
        ));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    for layer in &mut params.layers {
        for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *v = values.next().expect("length checked");
        }
    }
    Ok(params)
}

pub fn save(params: &NetParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<NetParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
