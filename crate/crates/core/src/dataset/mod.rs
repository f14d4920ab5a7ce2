//! Image/mask corpora: loading, synthesis and train/val/test splitting.

pub mod pmap;
pub mod pnm;
pub mod synth;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};

pub use pmap::{load_probmap, save_probmap};
pub use pnm::{load_image, load_mask};
pub use synth::{gen_synthetic, SynthConfig};

/// An RGB image with its binary crack mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub pixels: Grid3,
    pub mask: Mask,
}

impl ImageSample {
    pub fn new(id: impl Into<String>, pixels: Grid3, mask: Mask) -> Result<Self> {
        let id = id.into();
        if pixels.channels() != 3 {
            return Err(Error::Shape(format!(
                "{id}: image needs 3 channels, got {}",
                pixels.channels()
            )));
        }
        if pixels.dims() != mask.dims() {
            return Err(Error::Shape(format!(
                "{id}: image {:?} and mask {:?} differ",
                pixels.dims(),
                mask.dims()
            )));
        }
        Ok(Self { id, pixels, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dims()
    }
}

/// Loads every `<id>.ppm` with a sibling `<id>_mask.pgm`, sorted by id.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<ImageSample>> {
    let dir = dir.as_ref();
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("ppm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    ids.into_iter()
        .map(|id| {
            let pixels = load_image(dir.join(format!("{id}.ppm")))?;
            let mask = load_mask(dir.join(format!("{id}_mask.pgm")))?;
            ImageSample::new(id, pixels, mask)
        })
        .collect()
}

/// Writes `<id>.ppm` and `<id>_mask.pgm` for each sample.
pub fn save_corpus(samples: &[ImageSample], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in samples {
        pnm::save_image(&s.pixels, dir.join(format!("{}.ppm", s.id)))?;
        pnm::save_mask(&s.mask, dir.join(format!("{}_mask.pgm", s.id)))?;
    }
    Ok(())
}

/// Every sample must be `height×width`, and both must be divisible by
/// `2^depth`.
pub fn check_shapes(
    samples: &[ImageSample],
    height: usize,
    width: usize,
    depth: usize,
) -> Result<()> {
    let factor = 1usize
        .checked_shl(depth as u32)
        .ok_or_else(|| Error::InvalidArgument(format!("depth {depth} too large")))?;
    if !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
        return Err(Error::Shape(format!(
            "{height}x{width} is not divisible by 2^{depth}"
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.dims() != (height, width)) {
        return Err(Error::Shape(format!(
            "{} is {:?}, network expects {:?}",
            s.id,
            s.dims(),
            (height, width)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Partition sizes: `test = round(N/5)`, `val = round((N - test)/5)`,
/// both rounding half up; train gets the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = (2 * n + 5) / 10;
    let val = (2 * (n - test) + 5) / 10;
    (n - test - val, val, test)
}

/// Seeded Fisher–Yates shuffle, then test, val and train are cut from the
/// front of the permutation in that order.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<DatasetSplit> {
    if ids.len() < 5 {
        return Err(Error::Split(format!(
            "need at least 5 samples, got {}",
            ids.len()
        )));
    }
    let (_, n_val, n_test) = split_sizes(ids.len());
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = order.split_off(n_test + n_val);
    let val = order.split_off(n_test);
    Ok(DatasetSplit {
        train,
        val,
        test: order,
        seed,
    })
}

/// Looks up samples by id, preserving the order of `ids`.
pub fn select<'a>(samples: &'a [ImageSample], ids: &[String]) -> Result<Vec<&'a ImageSample>> {
    ids.iter()
        .map(|id| {
            samples
                .iter()
                .find(|s| &s.id == id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown sample id {id}")))
        })
        .collect()
}
