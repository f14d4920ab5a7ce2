//! First-order update rules with persistent per-parameter state.
//!
//! Defaults follow the usual Keras values: SGD lr 0.01; RMSprop lr 0.001,
//! rho 0.9; Adagrad lr 0.01; Adadelta lr 1.0, rho 0.95, eps 1e-6; Adam lr
//! 0.001 and Adamax/Nadam lr 0.002 with betas (0.9, 0.999). Epsilon is 1e-8
//! unless stated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ConvParams, Gradients, NetParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Rmsprop,
    Adagrad,
    Adadelta,
    Adam,
    Adamax,
    Nadam,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Sgd,
        Algorithm::Rmsprop,
        Algorithm::Adagrad,
        Algorithm::Adadelta,
        Algorithm::Adam,
        Algorithm::Adamax,
        Algorithm::Nadam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Rmsprop => "rmsprop",
            Algorithm::Adagrad => "adagrad",
            Algorithm::Adadelta => "adadelta",
            Algorithm::Adam => "adam",
            Algorithm::Adamax => "adamax",
            Algorithm::Nadam => "nadam",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Optimizer(format!("unknown algorithm `{s}`")))
    }
}

/// An algorithm and its hyperparameters. Fields an algorithm does not use
/// are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OptimizerSpec {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub momentum: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerSpec {
    pub fn defaults(algorithm: Algorithm) -> Self {
        let base = Self {
            algorithm,
            learning_rate: 0.001,
            momentum: 0.0,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        match algorithm {
            Algorithm::Sgd | Algorithm::Adagrad => Self {
                learning_rate: 0.01,
                ..base
            },
            Algorithm::Rmsprop | Algorithm::Adam => base,
            Algorithm::Adadelta => Self {
                learning_rate: 1.0,
                rho: 0.95,
                epsilon: 1e-6,
                ..base
            },
            Algorithm::Adamax | Algorithm::Nadam => Self {
                learning_rate: 0.002,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Optimizer(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        let uses = |a: &[Algorithm]| a.contains(&self.algorithm);
        if uses(&[Algorithm::Rmsprop, Algorithm::Adadelta]) && !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho {} must lie in (0, 1)", self.rho));
        }
        if uses(&[Algorithm::Adam, Algorithm::Adamax, Algorithm::Nadam]) {
            for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
                if !(b > 0.0 && b < 1.0) {
                    return bad(format!("{name} {b} must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Accumulator buffers the algorithm keeps per parameter.
    pub fn slot_names(&self) -> &'static [&'static str] {
        match self.algorithm {
            Algorithm::Sgd if self.momentum > 0.0 => &["velocity"],
            Algorithm::Sgd => &[],
            Algorithm::Rmsprop => &["mean-square"],
            Algorithm::Adagrad => &["sum-square"],
            Algorithm::Adadelta => &["mean-square", "mean-square-update"],
            Algorithm::Adam | Algorithm::Nadam => &["first-moment", "second-moment"],
            Algorithm::Adamax => &["first-moment", "infinity-norm"],
        }
    }
}

/// JSON form: every field but `algorithm` is optional and falls back to the
/// algorithm's default.
impl<'de> Deserialize<'de> for OptimizerSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        struct Raw {
            algorithm: String,
            learning_rate: Option<f64>,
            momentum: Option<f64>,
            rho: Option<f64>,
            beta1: Option<f64>,
            beta2: Option<f64>,
            epsilon: Option<f64>,
        }
        let raw = Raw::deserialize(d)?;
        let algorithm: Algorithm = raw.algorithm.parse().map_err(serde::de::Error::custom)?;
        let def = OptimizerSpec::defaults(algorithm);
        Ok(OptimizerSpec {
            algorithm,
            learning_rate: raw.learning_rate.unwrap_or(def.learning_rate),
            momentum: raw.momentum.unwrap_or(def.momentum),
            rho: raw.rho.unwrap_or(def.rho),
            beta1: raw.beta1.unwrap_or(def.beta1),
            beta2: raw.beta2.unwrap_or(def.beta2),
            epsilon: raw.epsilon.unwrap_or(def.epsilon),
        })
    }
}

/// Named flat parameter buffers an optimizer can walk.
pub trait ParamBuffers {
    /// `(name, length)` for every buffer, in a fixed order.
    fn layout(&self) -> Vec<(String, usize)>;
    fn buffers(&self) -> Vec<&[f64]>;
    fn buffers_mut(&mut self) -> Vec<&mut [f64]>;
}

fn conv_buffers(layers: &[ConvParams]) -> Vec<&[f64]> {
    layers
        .iter()
        .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
        .collect()
}

fn conv_buffers_mut(layers: &mut [ConvParams]) -> Vec<&mut [f64]> {
    layers
        .iter_mut()
        .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
        .collect()
}

fn conv_layout(names: Vec<String>, layers: &[ConvParams]) -> Vec<(String, usize)> {
    names
        .into_iter()
        .zip(layers)
        .flat_map(|(n, l)| {
            [
                (format!("{n}.weight"), l.weight.len()),
                (format!("{n}.bias"), l.bias.len()),
            ]
        })
        .collect()
}

impl ParamBuffers for NetParams {
    fn layout(&self) -> Vec<(String, usize)> {
        conv_layout(self.arch.layer_names(), &self.layers)
    }

    fn buffers(&self) -> Vec<&[f64]> {
        conv_buffers(&self.layers)
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        conv_buffers_mut(&mut self.layers)
    }
}

impl ParamBuffers for Gradients {
    fn layout(&self) -> Vec<(String, usize)> {
        let names = (0..self.layers.len())
            .map(|i| format!("layer{i}"))
            .collect();
        conv_layout(names, &self.layers)
    }

    fn buffers(&self) -> Vec<&[f64]> {
        conv_buffers(&self.layers)
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        conv_buffers_mut(&mut self.layers)
    }
}

/// A single unnamed vector, handy for small problems.
impl ParamBuffers for Vec<f64> {
    fn layout(&self) -> Vec<(String, usize)> {
        vec![("x".into(), self.len())]
    }

    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    /// `slots[s][b]` is accumulator `s` for parameter buffer `b`.
    pub slots: Vec<Vec<Vec<f64>>>,
    lengths: Vec<usize>,
}

pub fn opt_init<P: ParamBuffers>(spec: &OptimizerSpec, params: &P) -> Result<OptimizerState> {
    spec.validate()?;
    let lengths: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
    let slots = spec
        .slot_names()
        .iter()
        .map(|_| lengths.iter().map(|&n| vec![0.0; n]).collect())
        .collect();
    Ok(OptimizerState {
        step: 0,
        slots,
        lengths,
    })
}

/// Applies one update. Nothing is modified if the gradient contains a
/// non-finite value; the error names the first offending buffer.
pub fn opt_step<P: ParamBuffers, G: ParamBuffers>(
    spec: &OptimizerSpec,
    state: &mut OptimizerState,
    params: &mut P,
    grads: &G,
) -> Result<()> {
    let gbufs = grads.buffers();
    let lengths: Vec<usize> = gbufs.iter().map(|b| b.len()).collect();
    if lengths != state.lengths
        || params
            .buffers()
            .iter()
            .map(|b| b.len())
            .ne(lengths.iter().copied())
    {
        return Err(Error::Shape(
            "parameters, gradients and optimizer state are not congruent".into(),
        ));
    }
    if let Some(i) = gbufs.iter().position(|b| b.iter().any(|v| !v.is_finite())) {
        let name = params
            .layout()
            .into_iter()
            .nth(i)
            .map(|(n, _)| n)
            .unwrap_or_else(|| format!("buffer{i}"));
        return Err(Error::NonFiniteGradient { layer: name });
    }

    state.step += 1;
    let t = state.step as f64;
    let lr = spec.learning_rate;
    let eps = spec.epsilon;
    let mut pbufs = params.buffers_mut();
    for (b, (p, g)) in pbufs.iter_mut().zip(&gbufs).enumerate() {
        match spec.algorithm {
            Algorithm::Sgd if state.slots.is_empty() => {
                for (x, gv) in p.iter_mut().zip(g.iter()) {
                    *x -= lr * gv;
                }
            }
            Algorithm::Sgd => {
                let v = &mut state.slots[0][b];
                for ((x, gv), vel) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                    *vel = spec.momentum * *vel - lr * gv;
                    *x += *vel;
                }
            }
            Algorithm::Rmsprop => {
                let ms = &mut state.slots[0][b];
                for ((x, gv), s) in p.iter_mut().zip(g.iter()).zip(ms.iter_mut()) {
                    *s = spec.rho * *s + (1.0 - spec.rho) * gv * gv;
                    *x -= lr * gv / (s.sqrt() + eps);
                }
            }
            Algorithm::Adagrad => {
                let acc = &mut state.slots[0][b];
                for ((x, gv), s) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                    *s += gv * gv;
                    *x -= lr * gv / (s.sqrt() + eps);
                }
            }
            Algorithm::Adadelta => {
                let (first, rest) = state.slots.split_at_mut(1);
                let eg = &mut first[0][b];
                let ed = &mut rest[0][b];
                for (((x, gv), sg), sd) in p
                    .iter_mut()
                    .zip(g.iter())
                    .zip(eg.iter_mut())
                    .zip(ed.iter_mut())
                {
                    *sg = spec.rho * *sg + (1.0 - spec.rho) * gv * gv;
                    let delta = -((*sd + eps).sqrt() / (*sg + eps).sqrt()) * gv;
                    *sd = spec.rho * *sd + (1.0 - spec.rho) * delta * delta;
                    *x += lr * delta;
                }
            }
            Algorithm::Adam | Algorithm::Nadam => {
                let (b1, b2) = (spec.beta1, spec.beta2);
                let c1 = 1.0 - b1.powf(t);
                let c1_next = 1.0 - b1.powf(t + 1.0);
                let c2 = 1.0 - b2.powf(t);
                let nesterov = spec.algorithm == Algorithm::Nadam;
                let (first, rest) = state.slots.split_at_mut(1);
                let m = &mut first[0][b];
                let v = &mut rest[0][b];
                for (((x, gv), mv), vv) in p
                    .iter_mut()
                    .zip(g.iter())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *mv = b1 * *mv + (1.0 - b1) * gv;
                    *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                    let m_hat = if nesterov {
                        b1 * *mv / c1_next + (1.0 - b1) * gv / c1
                    } else {
                        *mv / c1
                    };
                    let v_hat = *vv / c2;
                    *x -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            Algorithm::Adamax => {
                let (b1, b2) = (spec.beta1, spec.beta2);
                let step = lr / (1.0 - b1.powf(t));
                let (first, rest) = state.slots.split_at_mut(1);
                let m = &mut first[0][b];
                let u = &mut rest[0][b];
                for (((x, gv), mv), uv) in p
                    .iter_mut()
                    .zip(g.iter())
                    .zip(m.iter_mut())
                    .zip(u.iter_mut())
                {
                    *mv = b1 * *mv + (1.0 - b1) * gv;
                    *uv = (b2 * *uv).max(gv.abs());
                    *x -= step * *mv / (*uv + eps);
                }
            }
        }
    }
    Ok(())
}
