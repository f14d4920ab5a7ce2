//! Hard labelling of softmax outputs: MAP, prior-adjusted ML and fixed
//! threshold rules. Every rule breaks ties toward crack.

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};
use crate::priors::PriorMap;

const SUM_TOLERANCE: f64 = 1e-9;

/// Per-pixel two-class probabilities; channel 0 is background, channel 1 crack.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    grid: Grid3,
}

impl ProbMap {
    pub const BACKGROUND: usize = 0;
    pub const CRACK: usize = 1;

    /// Wraps a grid after checking the two-channel simplex invariant.
    pub fn new(grid: Grid3) -> Result<Self> {
        if grid.channels() != 2 {
            return Err(Error::Shape(format!(
                "probability map needs 2 channels, got {}",
                grid.channels()
            )));
        }
        for px in grid.data().chunks_exact(2) {
            let (b, c) = (px[0], px[1]);
            if !(0.0..=1.0).contains(&b) || !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidArgument(format!(
                    "probability ({b}, {c}) outside [0, 1]"
                )));
            }
            if (b + c - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "probabilities ({b}, {c}) do not sum to 1"
                )));
            }
        }
        Ok(Self { grid })
    }

    /// Builds a map from crack probabilities, storing `1 - p` as background.
    pub fn from_crack_probs(height: usize, width: usize, crack: &[f64]) -> Result<Self> {
        if crack.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} map needs {} probabilities, got {}",
                height * width,
                crack.len()
            )));
        }
        let mut data = Vec::with_capacity(crack.len() * 2);
        for &p in crack {
            data.push(1.0 - p);
            data.push(p);
        }
        Self::new(Grid3::new(height, width, 2, data)?)
    }

    /// Ground truth read as a perfectly confident prediction.
    pub fn from_mask(mask: &Mask) -> Self {
        let crack: Vec<f64> = mask.labels().iter().map(|&v| f64::from(v)).collect();
        Self::from_crack_probs(mask.height(), mask.width(), &crack)
            .expect("mask-derived probabilities are valid")
    }

    pub(crate) fn from_grid_unchecked(grid: Grid3) -> Self {
        debug_assert_eq!(grid.channels(), 2);
        Self { grid }
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    #[inline]
    pub fn crack(&self, y: usize, x: usize) -> f64 {
        self.grid.get(y, x, Self::CRACK)
    }

    #[inline]
    pub fn background(&self, y: usize, x: usize) -> f64 {
        self.grid.get(y, x, Self::BACKGROUND)
    }

    /// Crack probabilities in row-major order.
    pub fn crack_probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid.data().chunks_exact(2).map(|px| px[1])
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn into_grid(self) -> Grid3 {
        self.grid
    }

    /// Posterior reweighted by the inverse class prior at each position and
    /// renormalized. Thresholding the result at 0.5 reproduces [`ml_rule`]
    /// up to floating-point ties.
    pub fn prior_adjusted(&self, priors: &PriorMap) -> Result<ProbMap> {
        check_priors(self, priors)?;
        let (h, w) = self.dims();
        let mut crack = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let lc = self.crack(y, x) / priors.crack(y, x);
                let lb = self.background(y, x) / priors.background(y, x);
                let total = lc + lb;
                crack.push(if total > 0.0 { lc / total } else { 0.5 });
            }
        }
        ProbMap::from_crack_probs(h, w, &crack)
    }
}

/// Maximum a-posteriori labelling: crack iff `p_crack >= p_background`.
pub fn map_rule(p: &ProbMap) -> Mask {
    let (h, w) = p.dims();
    Mask::from_fn(h, w, |y, x| p.crack(y, x) >= p.background(y, x))
}

/// Maximum-likelihood labelling under per-position class priors.
///
/// For two classes `p_c / π_c >= p_b / π_b` reduces to `p_c >= π_c`, which
/// is what is evaluated here.
pub fn ml_rule(p: &ProbMap, priors: &PriorMap) -> Result<Mask> {
    check_priors(p, priors)?;
    let (h, w) = p.dims();
    Ok(Mask::from_fn(h, w, |y, x| {
        p.crack(y, x) >= priors.crack(y, x)
    }))
}

/// Crack iff `p_crack >= t`.
pub fn threshold_rule(p: &ProbMap, t: f64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "threshold {t} outside [0, 1]"
        )));
    }
    let (h, w) = p.dims();
    Ok(Mask::from_fn(h, w, |y, x| p.crack(y, x) >= t))
}

fn check_priors(p: &ProbMap, priors: &PriorMap) -> Result<()> {
    if p.dims() != priors.dims() {
        return Err(Error::Shape(format!(
            "probability map {:?} vs prior map {:?}",
            p.dims(),
            priors.dims()
        )));
    }
    if let Some(v) = priors
        .grid()
        .data()
        .iter()
        .find(|&&v| !(v > 0.0 && v < 1.0))
    {
        return Err(Error::Prior(format!(
            "prior {v} is not strictly inside (0, 1)"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(bg: f64, crack: f64) -> ProbMap {
        ProbMap::new(Grid3::new(1, 1, 2, vec![bg, crack]).unwrap()).unwrap()
    }

    fn single_prior(bg: f64, crack: f64) -> PriorMap {
        PriorMap::new(Grid3::new(1, 1, 2, vec![bg, crack]).unwrap()).unwrap()
    }

    #[test]
    fn map_rule_examples() {
        assert!(!map_rule(&single(0.9, 0.1)).get(0, 0));
        assert!(map_rule(&single(0.5, 0.5)).get(0, 0));
    }

    #[test]
    fn ml_rule_prefers_rare_class_when_likelihood_ratio_wins() {
        // 0.3 / 0.05 = 6 beats 0.7 / 0.95
        let m = ml_rule(&single(0.7, 0.3), &single_prior(0.95, 0.05)).unwrap();
        assert!(m.get(0, 0));
    }

    #[test]
    fn ml_rule_uniform_prior_matches_map() {
        let probs: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let p = ProbMap::from_crack_probs(4, 4, &probs).unwrap();
        let prior = PriorMap::uniform(4, 4);
        assert_eq!(ml_rule(&p, &prior).unwrap(), map_rule(&p));
    }

    #[test]
    fn ml_rule_rejects_degenerate_priors() {
        let bad = PriorMap::from_grid_unchecked(Grid3::new(1, 1, 2, vec![1.0, 0.0]).unwrap());
        assert!(matches!(
            ml_rule(&single(0.5, 0.5), &bad),
            Err(Error::Prior(_))
        ));
    }

    #[test]
    fn threshold_rule_examples() {
        let p = ProbMap::from_crack_probs(1, 3, &[0.0, 0.5, 0.99]).unwrap();
        assert_eq!(threshold_rule(&p, 0.0).unwrap().crack_count(), 3);
        assert_eq!(threshold_rule(&p, 1.0).unwrap().crack_count(), 0);
        let at = ProbMap::from_crack_probs(1, 1, &[0.2]).unwrap();
        assert!(threshold_rule(&at, 0.2).unwrap().get(0, 0));
        assert!(threshold_rule(&p, 1.5).is_err());
        assert!(threshold_rule(&p, -0.1).is_err());
    }

    #[test]
    fn probmap_validation() {
        assert!(ProbMap::new(Grid3::new(1, 1, 2, vec![0.6, 0.6]).unwrap()).is_err());
        assert!(ProbMap::new(Grid3::new(1, 1, 2, vec![-0.1, 1.1]).unwrap()).is_err());
        assert!(ProbMap::new(Grid3::new(1, 1, 3, vec![0.2, 0.3, 0.5]).unwrap()).is_err());
    }

    #[test]
    fn prior_adjusted_at_half_matches_ml_rule() {
        let probs: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).fract()).collect();
        let p = ProbMap::from_crack_probs(5, 5, &probs).unwrap();
        let pri: Vec<f64> = (0..25)
            .map(|i| 0.05 + 0.3 * ((i * 7 % 25) as f64 / 25.0))
            .collect();
        let prior = PriorMap::from_crack_priors(5, 5, &pri).unwrap();
        let adjusted = p.prior_adjusted(&prior).unwrap();
        assert_eq!(
            threshold_rule(&adjusted, 0.5).unwrap(),
            ml_rule(&p, &prior).unwrap()
        );
    }
}
