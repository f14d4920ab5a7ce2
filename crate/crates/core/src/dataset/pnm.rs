//! Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};

/// Mask cells at or above this byte value are crack.
pub const MASK_THRESHOLD: u8 = 128;

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            "magic",
            format!(
                "expected {}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..bytes.len().min(2)])
            ),
        ));
    }
    let mut pos = 2;
    let mut next_field = |field: &'static str| -> Result<usize> {
        // whitespace and `#` comments may precede each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(field, "missing or non-numeric value"));
        }
        std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse::<usize>()
            .map_err(|e| Error::format(field, e.to_string()))
    };
    let width = next_field("width")?;
    let height = next_field("height")?;
    let maxval = next_field("maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            "maxval",
            format!("only 8-bit maxval 255 is supported, found {maxval}"),
        ));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("maxval", "missing whitespace before payload"));
    }
    Ok(Header {
        width,
        height,
        payload_start: pos + 1,
    })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("dimensions", "width x height overflows"))?;
    let data = &bytes[header.payload_start..];
    if data.len() < need {
        return Err(Error::format(
            "payload",
            format!("expected {need} bytes, found {}", data.len()),
        ));
    }
    Ok(&data[..need])
}

/// Decodes P6 bytes into an `H×W×3` grid scaled to [0, 1].
pub fn decode_ppm(bytes: &[u8]) -> Result<Grid3> {
    let header = parse_header(bytes, b"P6")?;
    let data = payload(bytes, &header, 3)?;
    let values = data.iter().map(|&b| f64::from(b) / 255.0).collect();
    Grid3::new(header.height, header.width, 3, values)
}

/// Decodes P5 bytes into a binary mask using the `>= 128` rule.
pub fn decode_pgm_mask(bytes: &[u8]) -> Result<Mask> {
    let header = parse_header(bytes, b"P5")?;
    let data = payload(bytes, &header, 1)?;
    let labels = data
        .iter()
        .map(|&b| u8::from(b >= MASK_THRESHOLD))
        .collect();
    Mask::new(header.height, header.width, labels)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Grid3> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm_mask(&bytes)
}

/// Encodes an RGB grid as P6, rounding `v * 255` to the nearest byte.
pub fn encode_ppm(pixels: &Grid3) -> Result<Vec<u8>> {
    if pixels.channels() != 3 {
        return Err(Error::Shape(format!(
            "P6 needs 3 channels, got {}",
            pixels.channels()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", pixels.width(), pixels.height()).into_bytes();
    out.extend(pixels.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

/// Encodes a mask as P5 with values {0, 255}.
pub fn encode_pgm_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(
        mask.labels()
            .iter()
            .map(|&v| if v == 1 { 255u8 } else { 0 }),
    );
    out
}

pub fn save_image(pixels: &Grid3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(pixels)?).map_err(|e| Error::io(path, e))
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm_mask(mask)).map_err(|e| Error::io(path, e))
}

#[inline]
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
