//! Mini-batch training with best-validation snapshots.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageSample;
use crate::decision::ProbMap;
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::metrics::{default_thresholds, mpa, pr_curve};
use crate::network::{forward, loss_and_gradients, predict, weighted_cross_entropy, NetParams};
use crate::optim::{opt_init, opt_step, OptimizerSpec};
use crate::priors::ClassWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snapshot {
    /// Lowest validation loss.
    #[default]
    ValLoss,
    /// Highest validation MPA.
    ValMpa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub snapshot: Snapshot,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "epochs ({}) and batch-size ({}) must be at least 1",
                self.epochs, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mpa: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the selected epoch.
    pub params: NetParams,
    /// 1-based.
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.log {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }
}

/// Trains from `init` and returns the snapshot with the best validation
/// score. A snapshot is replaced only on strict improvement.
pub fn train(
    init: NetParams,
    spec: &OptimizerSpec,
    weights: &ClassWeights,
    train_set: &[&ImageSample],
    val_set: &[&ImageSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut params = init;
    let mut state = opt_init(spec, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, NetParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = params.zero_gradients();
            for &i in batch {
                let s = train_set[i];
                let (loss, g) = loss_and_gradients(&params, &s.pixels, &s.mask, weights)?;
                loss_sum += loss;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f64);
            opt_step(spec, &mut state, &mut params, &acc)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_mpa) = validate(&params, val_set, weights, cfg.snapshot)?;
        let score = match cfg.snapshot {
            Snapshot::ValLoss => -val_loss,
            Snapshot::ValMpa => val_mpa.expect("computed for MPA snapshots"),
        };
        if !score.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "validation score is not finite at epoch {epoch}"
            )));
        }
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, params.clone()));
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_mpa,
        });
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        log,
    })
}

fn validate(
    params: &NetParams,
    val_set: &[&ImageSample],
    weights: &ClassWeights,
    snapshot: Snapshot,
) -> Result<(f64, Option<f64>)> {
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(val_set.len());
    for s in val_set {
        let (p, _) = forward(params, &s.pixels)?;
        loss += weighted_cross_entropy(&p, &s.mask, weights)?;
        if snapshot == Snapshot::ValMpa {
            probs.push(p);
        }
    }
    let loss = loss / val_set.len() as f64;
    let score = match snapshot {
        Snapshot::ValLoss => None,
        Snapshot::ValMpa => Some(probability_mpa(&probs, &masks_of(val_set))?),
    };
    Ok((loss, score))
}

pub fn predict_all(params: &NetParams, samples: &[&ImageSample]) -> Result<Vec<ProbMap>> {
    samples.iter().map(|s| predict(params, &s.pixels)).collect()
}

pub fn masks_of(samples: &[&ImageSample]) -> Vec<Mask> {
    samples.iter().map(|s| s.mask.clone()).collect()
}

/// MPA of the default 101-point PR curve.
pub fn probability_mpa(probs: &[ProbMap], truths: &[Mask]) -> Result<f64> {
    mpa(&pr_curve(probs, truths, &default_thresholds())?)
}
