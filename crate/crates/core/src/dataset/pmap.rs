//! PMAP container: `"PMAP"`, then `u32` H, W, C little-endian, then
//! `H·W·C` little-endian `f64` values, row-major with channel fastest.

use std::fs;
use std::path::Path;

use crate::decision::ProbMap;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::priors::PriorMap;

pub const MAGIC: &[u8; 4] = b"PMAP";
const HEADER_LEN: usize = 16;

pub fn encode_grid(grid: &Grid3) -> Result<Vec<u8>> {
    let dim = |v: usize, field| {
        u32::try_from(v).map_err(|_| Error::format(field, format!("{v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + grid.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(grid.height(), "height")?.to_le_bytes());
    out.extend_from_slice(&dim(grid.width(), "width")?.to_le_bytes());
    out.extend_from_slice(&dim(grid.channels(), "channels")?.to_le_bytes());
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid3> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(
            "magic",
            format!(
                "expected PMAP, found {:?}",
                String::from_utf8_lossy(&bytes[..bytes.len().min(4)])
            ),
        ));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("header", "truncated before dimensions"));
    }
    let read_u32 =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (read_u32(4), read_u32(8), read_u32(12));
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::format("dimensions", format!("{h}x{w}x{c} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(Error::format(
            "payload",
            format!("expected {} bytes, found {}", count * 8, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Grid3::new(h, w, c, data)
}

pub fn save_grid(grid: &Grid3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(grid)?).map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid3> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

pub fn save_probmap(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    save_grid(map.grid(), path)
}

pub fn load_probmap(path: impl AsRef<Path>) -> Result<ProbMap> {
    ProbMap::new(load_grid(path)?)
}

pub fn save_priors(map: &PriorMap, path: impl AsRef<Path>) -> Result<()> {
    save_grid(map.grid(), path)
}

pub fn load_priors(path: impl AsRef<Path>) -> Result<PriorMap> {
    PriorMap::new(load_grid(path)?)
}
