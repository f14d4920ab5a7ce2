//! Class frequency estimation: per-position priors for the ML decision rule
//! and median-frequency loss weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};

/// Laplace pseudo-count applied per class at every position.
pub const DEFAULT_ALPHA: f64 = 1.0;

const SUM_TOLERANCE: f64 = 1e-12;

/// Per-position class priors, channel 0 background and channel 1 crack.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMap {
    grid: Grid3,
}

impl PriorMap {
    pub fn new(grid: Grid3) -> Result<Self> {
        if grid.channels() != 2 {
            return Err(Error::Shape(format!(
                "prior map needs 2 channels, got {}",
                grid.channels()
            )));
        }
        for px in grid.data().chunks_exact(2) {
            if !(px[0] > 0.0 && px[1] > 0.0) || (px[0] + px[1] - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Prior(format!(
                    "priors ({}, {}) must be positive and sum to 1",
                    px[0], px[1]
                )));
            }
        }
        Ok(Self { grid })
    }

    #[cfg(test)]
    pub(crate) fn from_grid_unchecked(grid: Grid3) -> Self {
        Self { grid }
    }

    pub fn from_crack_priors(height: usize, width: usize, crack: &[f64]) -> Result<Self> {
        if crack.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} prior map needs {} values, got {}",
                height * width,
                crack.len()
            )));
        }
        let data = crack.iter().flat_map(|&p| [1.0 - p, p]).collect();
        Self::new(Grid3::new(height, width, 2, data)?)
    }

    /// Every position at (0.5, 0.5); the ML rule then coincides with MAP.
    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            grid: Grid3::from_fn(height, width, 2, |_, _, _| 0.5),
        }
    }

    /// One global prior copied to every position.
    pub fn broadcast(height: usize, width: usize, crack: f64) -> Result<Self> {
        Self::from_crack_priors(height, width, &vec![crack; height * width])
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    #[inline]
    pub fn crack(&self, y: usize, x: usize) -> f64 {
        self.grid.get(y, x, 1)
    }

    #[inline]
    pub fn background(&self, y: usize, x: usize) -> f64 {
        self.grid.get(y, x, 0)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn into_grid(self) -> Grid3 {
        self.grid
    }

    pub fn max_crack(&self) -> f64 {
        self.grid
            .data()
            .chunks_exact(2)
            .map(|px| px[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClassWeights {
    pub background: f64,
    pub crack: f64,
}

impl ClassWeights {
    pub fn new(background: f64, crack: f64) -> Result<Self> {
        for (name, w) in [("background", background), ("crack", crack)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Weight(format!(
                    "{name} weight {w} must be positive and finite"
                )));
            }
        }
        Ok(Self { background, crack })
    }

    /// Weight applied to pixels whose true label is `crack`.
    #[inline]
    pub fn for_label(&self, crack: bool) -> f64 {
        if crack {
            self.crack
        } else {
            self.background
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            background: self.background * c,
            crack: self.crack * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GlobalFrequencies {
    pub background: f64,
    pub crack: f64,
}

/// Smoothed per-position priors with the default pseudo-count.
pub fn frequency_map(masks: &[Mask]) -> Result<PriorMap> {
    frequency_map_with_alpha(masks, DEFAULT_ALPHA)
}

/// `prior_c(i,j) = (count_c(i,j) + α) / (N + 2α)` over the `N` masks.
pub fn frequency_map_with_alpha(masks: &[Mask], alpha: f64) -> Result<PriorMap> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("no masks to count".into()))?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing pseudo-count {alpha} must be positive"
        )));
    }
    let (h, w) = first.dims();
    let mut counts = vec![0u64; h * w];
    for m in masks {
        if m.dims() != (h, w) {
            return Err(Error::Shape(format!(
                "mask {:?} differs from {:?}",
                m.dims(),
                (h, w)
            )));
        }
        for (c, &v) in counts.iter_mut().zip(m.labels()) {
            *c += u64::from(v);
        }
    }
    let n = masks.len() as f64;
    let denom = n + 2.0 * alpha;
    let mut data = Vec::with_capacity(h * w * 2);
    for &c in &counts {
        let crack = (c as f64 + alpha) / denom;
        let background = (n - c as f64 + alpha) / denom;
        data.push(background);
        data.push(crack);
    }
    PriorMap::new(Grid3::new(h, w, 2, data)?)
}

/// Priors for a `height×width` model input. Uses per-position counts when
/// every mask has that resolution, otherwise the smoothed global crack
/// frequency at every position.
pub fn prior_map_for(masks: &[Mask], height: usize, width: usize, alpha: f64) -> Result<PriorMap> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("no masks to count".into()));
    }
    if masks.iter().all(|m| m.dims() == (height, width)) {
        return frequency_map_with_alpha(masks, alpha);
    }
    let total: u64 = masks.iter().map(|m| m.len() as u64).sum();
    let crack: u64 = masks.iter().map(|m| m.crack_count() as u64).sum();
    let p = (crack as f64 + alpha) / (total as f64 + 2.0 * alpha);
    PriorMap::broadcast(height, width, p)
}

/// Pooled, unsmoothed pixel fractions per class.
pub fn global_frequencies(masks: &[Mask]) -> Result<GlobalFrequencies> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("no masks to count".into()));
    }
    let total: u64 = masks.iter().map(|m| m.len() as u64).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("masks contain no pixels".into()));
    }
    let crack: u64 = masks.iter().map(|m| m.crack_count() as u64).sum();
    let background = total - crack;
    Ok(GlobalFrequencies {
        background: background as f64 / total as f64,
        crack: crack as f64 / total as f64,
    })
}

/// `w_c = median(f) / f_c`; with two classes the median is their mean.
pub fn median_frequency_weights(f: GlobalFrequencies) -> Result<ClassWeights> {
    if !(f.background > 0.0 && f.crack > 0.0) {
        return Err(Error::Weight(format!(
            "median-frequency weights undefined for frequencies ({}, {})",
            f.background, f.crack
        )));
    }
    let median = 0.5 * (f.background + f.crack);
    ClassWeights::new(median / f.background, median / f.crack)
}

pub fn uniform_weights() -> ClassWeights {
    ClassWeights {
        background: 1.0,
        crack: 1.0,
    }
}
