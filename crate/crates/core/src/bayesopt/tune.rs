//! The sequential tuning loop.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::propose_next;
use super::gp::GpState;
use super::space::SearchSpace;
use crate::error::{Error, Result};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: Params,
    /// The worst value observed so far when the evaluation failed; `None`
    /// if nothing had succeeded yet.
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    /// EI of the point when it was proposed; `None` for the initial design.
    #[serde(skip)]
    pub acquisition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TuneResult {
    pub best: Params,
    pub best_objective: f64,
    pub history: Vec<Evaluation>,
}

/// Size of the random initial design for a given budget.
pub fn initial_design_size(budget: usize) -> usize {
    (budget / 4).max(3)
}

pub fn tune<F>(objective: F, space: &SearchSpace, budget: usize, seed: u64) -> Result<TuneResult>
where
    F: FnMut(&Params) -> Result<f64>,
{
    tune_with_initial(objective, space, budget, seed, &[])
}

/// Like [`tune`], with `forced` points (in natural units) evaluated first as
/// part of the initial design.
pub fn tune_with_initial<F>(
    mut objective: F,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    forced: &[Vec<f64>],
) -> Result<TuneResult>
where
    F: FnMut(&Params) -> Result<f64>,
{
    space.validate()?;
    if budget < 4 {
        return Err(Error::Tune(format!("budget {budget} is below 4")));
    }
    for p in forced {
        if p.len() != space.len() {
            return Err(Error::Tune(format!(
                "forced point has {} coordinates, space has {}",
                p.len(),
                space.len()
            )));
        }
    }
    let n_init = initial_design_size(budget).max(forced.len()).min(budget);
    let mut design_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut values: Vec<Option<f64>> = Vec::with_capacity(budget);
    let mut history = Vec::with_capacity(budget);

    let random_point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..space.len()).map(|_| rng.random::<f64>()).collect()
    };

    for i in 0..budget {
        let (unit, acquisition) = if let Some(p) = forced.get(i) {
            (space.encode(p), None)
        } else if i < n_init {
            (random_point(&mut design_rng), None)
        } else {
            match fit_observed(&units, &values, mix(seed, i as u64, 1))? {
                Some(gp) => {
                    let (x, ei) = propose_next(&gp, mix(seed, i as u64, 2));
                    (x, Some(ei))
                }
                None => (random_point(&mut design_rng), None),
            }
        };
        let decoded = if let Some(p) = forced.get(i) {
            p.clone()
        } else {
            space.decode(&unit)
        };
        let params: Params = space.names().map(String::from).zip(decoded).collect();
        let outcome = objective(&params).ok().filter(|v| v.is_finite());
        let worst = values.iter().flatten().copied().reduce(f64::min);
        history.push(Evaluation {
            params,
            objective: outcome.or(worst),
            failed: outcome.is_none(),
            acquisition,
        });
        units.push(unit);
        values.push(outcome);
    }

    let (best_idx, best_objective) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::Tune("every objective evaluation failed".into()))?;
    Ok(TuneResult {
        best: history[best_idx].params.clone(),
        best_objective,
        history,
    })
}

/// Fits a GP to the observations so far, imputing failures with the worst
/// successful value. `None` when nothing has succeeded.
fn fit_observed(units: &[Vec<f64>], values: &[Option<f64>], seed: u64) -> Result<Option<GpState>> {
    let Some(worst) = values.iter().flatten().copied().reduce(f64::min) else {
        return Ok(None);
    };
    let ys = values.iter().map(|v| v.unwrap_or(worst)).collect();
    GpState::fit(units.to_vec(), ys, seed).map(Some)
}

fn mix(seed: u64, index: u64, tag: u64) -> u64 {
    let mut z =
        seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
