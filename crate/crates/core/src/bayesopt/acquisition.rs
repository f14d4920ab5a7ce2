//! Expected improvement and candidate-set maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gp::GpState;

pub const CANDIDATES: usize = 2048;

/// Abramowitz & Stegun 7.1.26, absolute error below 1.5e-7.
pub fn erf(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A: [f64; 5] = [
        0.254_829_592,
        -0.284_496_736,
        1.421_413_741,
        -1.453_152_027,
        1.061_405_429,
    ];
    let s = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    s * (1.0 - poly * (-x * x).exp())
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// EI for maximization, never negative.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gain = mean - best;
    if variance <= 0.0 {
        return gain.max(0.0);
    }
    let sigma = variance.sqrt();
    let z = gain / sigma;
    (gain * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

/// Highest-EI point among [`CANDIDATES`] seeded uniform draws, with its EI.
/// Ties keep the earliest candidate.
pub fn propose_next(gp: &GpState, seed: u64) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let best = gp.best_target();
    let dim = gp.dim();
    let mut arg = Vec::new();
    let mut top = f64::NEG_INFINITY;
    for _ in 0..CANDIDATES {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let (m, v) = gp.posterior(&x);
        let ei = expected_improvement(m, v, best);
        if ei > top {
            top = ei;
            arg = x;
        }
    }
    (arg, top)
}
