//! Gaussian-process regression with a squared-exponential ARD kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lower bound on the observation noise variance when fitting.
pub const NOISE_FLOOR: f64 = 1e-6;
/// Random hyperparameter candidates tried by [`GpState::fit`].
pub const FIT_TRIALS: usize = 64;

const JITTER_STEPS: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    /// `σ² exp(−Σ_d (a_d − b_d)² / (2ℓ_d²))`
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// A conditioned GP: observations, kernel, constant prior mean, and the
/// Cholesky factor of `K + (noise + jitter) I`.
#[derive(Debug, Clone)]
pub struct GpState {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    kernel: KernelParams,
    prior_mean: f64,
    jitter: f64,
    /// Lower-triangular, row-major `n×n`.
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

impl GpState {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        kernel: KernelParams,
        prior_mean: f64,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) || kernel.lengthscales.len() != dim {
            return Err(Error::Shape("inconsistent GP input dimensions".into()));
        }
        if inputs.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "GP inputs must lie in the unit hypercube".into(),
            ));
        }
        let n = inputs.len();
        let base: Vec<f64> = (0..n * n)
            .map(|k| kernel.eval(&inputs[k / n], &inputs[k % n]))
            .collect();
        let scale = kernel.signal_variance.max(kernel.noise_variance).max(1e-12);
        let mut factor = None;
        for &j in &JITTER_STEPS {
            let mut m = base.clone();
            for i in 0..n {
                m[i * n + i] += kernel.noise_variance + j * scale;
            }
            if let Some(l) = cholesky(&m, n) {
                factor = Some((l, j * scale));
                break;
            }
        }
        let (chol, jitter) = factor.ok_or(Error::Factorization {
            jitter: JITTER_STEPS[JITTER_STEPS.len() - 1] * scale,
        })?;
        let centered: Vec<f64> = targets.iter().map(|y| y - prior_mean).collect();
        let alpha = cho_solve(&chol, n, &centered);
        Ok(Self {
            inputs,
            targets,
            kernel,
            prior_mean,
            jitter,
            chol,
            alpha,
        })
    }

    /// Conditions on the data with the prior mean at the target average and
    /// kernel hyperparameters chosen by marginal likelihood among
    /// [`FIT_TRIALS`] seeded random candidates.
    pub fn fit(inputs: Vec<Vec<f64>>, targets: Vec<f64>, seed: u64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("no observations".into()));
        }
        let dim = inputs[0].len();
        let n = targets.len() as f64;
        let mean = if targets.iter().all(|&y| y == targets[0]) {
            targets[0]
        } else {
            targets.iter().sum::<f64>() / n
        };
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(f64, GpState)> = None;
        for _ in 0..FIT_TRIALS {
            let kernel = KernelParams {
                signal_variance: var * 10f64.powf(rng.random_range(-1.0..1.0)),
                lengthscales: (0..dim)
                    .map(|_| 10f64.powf(rng.random_range(-1.5..0.5)))
                    .collect(),
                noise_variance: (var * 10f64.powf(rng.random_range(-6.0..-1.0))).max(NOISE_FLOOR),
            };
            let Ok(gp) = GpState::new(inputs.clone(), targets.clone(), kernel, mean) else {
                continue;
            };
            let ll = gp.log_marginal_likelihood();
            if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                best = Some((ll, gp));
            }
        }
        best.map(|(_, gp)| gp).ok_or(Error::Factorization {
            jitter: JITTER_STEPS[JITTER_STEPS.len() - 1],
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn best_target(&self) -> f64 {
        self.targets
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        let fit: f64 = self
            .targets
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| (y - self.prior_mean) * a)
            .sum();
        let logdet: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and latent variance at `x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let n = self.len();
        let kstar: Vec<f64> = self
            .inputs
            .iter()
            .map(|xi| self.kernel.eval(xi, x))
            .collect();
        let mean = self.prior_mean
            + kstar
                .iter()
                .zip(&self.alpha)
                .map(|(k, a)| k * a)
                .sum::<f64>();
        let v = forward_sub(&self.chol, n, &kstar);
        let prior = self.kernel.signal_variance;
        let var = prior - v.iter().map(|t| t * t).sum::<f64>();
        // round-off floor
        let var = if var <= 1e-12 * prior { 0.0 } else { var };
        (mean, var)
    }
}

/// Free-function form of [`GpState::posterior`].
pub fn gp_posterior(gp: &GpState, x: &[f64]) -> (f64, f64) {
    gp.posterior(x)
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

fn back_sub_transposed(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

fn cho_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    back_sub_transposed(l, n, &forward_sub(l, n, b))
}
