//! Named search dimensions and the unit-hypercube mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn linear(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Linear,
        }
    }

    pub fn log10(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Log10,
        }
    }

    /// Maps `u ∈ [0, 1]` into `[lower, upper]`.
    pub fn decode(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log10 => {
                let (a, b) = (self.lower.log10(), self.upper.log10());
                10f64.powf(a + u * (b - a))
            }
        };
        v.clamp(self.lower, self.upper)
    }

    pub fn encode(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Log10 => {
                let (a, b) = (self.lower.log10(), self.upper.log10());
                (v.log10() - a) / (b - a)
            }
        };
        u.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SearchSpace {
    pub dimensions: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        let s = Self { dimensions };
        s.validate()?;
        Ok(s)
    }

    /// Adadelta learning rate, rho and epsilon.
    pub fn adadelta() -> Self {
        Self {
            dimensions: vec![
                Dimension::linear("learning-rate", 0.1, 2.0),
                Dimension::linear("rho", 0.8, 0.999),
                Dimension::log10("epsilon", 1e-8, 1e-4),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::InvalidArgument(
                "search space has no dimensions".into(),
            ));
        }
        for (i, d) in self.dimensions.iter().enumerate() {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::InvalidArgument(format!(
                    "dimension {}: need finite lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.scale == Scale::Log10 && d.lower <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "dimension {}: log10 bounds must be positive",
                    d.name
                )));
            }
            if self.dimensions[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate dimension {}",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn decode(&self, unit: &[f64]) -> Vec<f64> {
        self.dimensions
            .iter()
            .zip(unit)
            .map(|(d, &u)| d.decode(u))
            .collect()
    }

    pub fn encode(&self, values: &[f64]) -> Vec<f64> {
        self.dimensions
            .iter()
            .zip(values)
            .map(|(d, &v)| d.encode(v))
            .collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.dimensions.iter().map(|d| d.name.as_str())
    }
}
