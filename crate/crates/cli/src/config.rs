//! The JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crackseg_core::bayesopt::SearchSpace;
use crackseg_core::dataset::SynthConfig;
use crackseg_core::network::ArchSpec;
use crackseg_core::optim::{Algorithm, OptimizerSpec};
use crackseg_core::training::Snapshot;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    MedianFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Map,
    Ml,
}

/// A training-time weighting paired with a decision-time rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    UwMap,
    UwMl,
    MfwMap,
    /// Only accepted with `allow-cross-strategy`.
    MfwMl,
}

impl Strategy {
    pub const STUDIED: [Strategy; 3] = [Strategy::UwMap, Strategy::UwMl, Strategy::MfwMap];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::UwMap => "uw-map",
            Strategy::UwMl => "uw-ml",
            Strategy::MfwMap => "mfw-map",
            Strategy::MfwMl => "mfw-ml",
        }
    }

    pub fn weighting(self) -> Weighting {
        match self {
            Strategy::UwMap | Strategy::UwMl => Weighting::Uniform,
            Strategy::MfwMap | Strategy::MfwMl => Weighting::MedianFrequency,
        }
    }

    pub fn rule(self) -> Rule {
        match self {
            Strategy::UwMap | Strategy::MfwMap => Rule::Map,
            Strategy::UwMl | Strategy::MfwMl => Rule::Ml,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            Strategy::UwMap,
            Strategy::UwMl,
            Strategy::MfwMap,
            Strategy::MfwMl,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown strategy {s:?}; expected uw-map, uw-ml or mfw-map"))
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SynthConfig),
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TuneSettings {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "SearchSpace::adadelta")]
    pub space: SearchSpace,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            space: SearchSpace::adadelta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Defaults to four blocks sized to the corpus.
    #[serde(default)]
    pub arch: Option<ArchSpec>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerSpec,
    pub strategy: Strategy,
    #[serde(default)]
    pub allow_cross_strategy: bool,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_directory: PathBuf,
    #[serde(default)]
    pub snapshot: Snapshot,
    #[serde(default = "default_alpha")]
    pub prior_alpha: f64,
    /// Model to evaluate; defaults to `model.netp` in the output directory.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Priors for ML decisions; defaults to `priors.pmap` next to the model.
    #[serde(default)]
    pub priors: Option<PathBuf>,
    #[serde(default)]
    pub tune: TuneSettings,
    /// Output directories of finished `eval` runs.
    #[serde(default)]
    pub compare: Vec<PathBuf>,
}

fn default_optimizer() -> OptimizerSpec {
    OptimizerSpec::defaults(Algorithm::Adadelta)
}
fn default_epochs() -> usize {
    80
}
fn default_batch() -> usize {
    4
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_alpha() -> f64 {
    1.0
}
fn default_budget() -> usize {
    12
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Missing {
            path: path.to_path_buf(),
            what: if e.kind() == std::io::ErrorKind::NotFound {
                "configuration file not found"
            } else {
                "configuration file unreadable"
            },
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.strategy == Strategy::MfwMl && !self.allow_cross_strategy {
            return bad("strategy mfw-ml requires allow-cross-strategy: true".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch-size must be at least 1".into());
        }
        if !(self.prior_alpha.is_finite() && self.prior_alpha > 0.0) {
            return bad(format!("prior-alpha {} must be positive", self.prior_alpha));
        }
        if let Some(a) = &self.arch {
            a.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.optimizer
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.tune
            .space
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn model_path(&self, out: &Path) -> PathBuf {
        self.model.clone().unwrap_or_else(|| out.join("model.netp"))
    }

    pub fn priors_path(&self, out: &Path) -> PathBuf {
        self.priors.clone().unwrap_or_else(|| {
            let model = self.model_path(out);
            model
                .parent()
                .map(|d| d.join("priors.pmap"))
                .unwrap_or_else(|| out.join("priors.pmap"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::from_json(r#"{"data": {"directory": "imgs"}, "strategy": "uw-ml"}"#)
            .unwrap();
        assert_eq!(c.epochs, 80);
        assert_eq!(c.batch_size, 4);
        assert_eq!(c.optimizer.algorithm, Algorithm::Adadelta);
        assert_eq!(c.strategy.rule(), Rule::Ml);
        assert_eq!(
            c.priors_path(Path::new("o")),
            PathBuf::from("o/priors.pmap")
        );
    }

    #[test]
    fn synthetic_fields_default() {
        let c = RunConfig::from_json(
            r#"{"data": {"synthetic": {"count": 12, "seed": 3}}, "strategy": "mfw-map"}"#,
        )
        .unwrap();
        let DataSource::Synthetic(s) = c.data else {
            panic!()
        };
        assert_eq!((s.count, s.seed, s.height), (12, 3, 64));
    }

    #[test]
    fn cross_strategy_needs_flag() {
        let base = r#"{"data": {"directory": "d"}, "strategy": "mfw-ml""#;
        assert!(RunConfig::from_json(&format!("{base}}}")).is_err());
        assert!(RunConfig::from_json(&format!("{base}, \"allow-cross-strategy\": true}}")).is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            r#"{"data": {"directory": "d"}, "strategy": "map"}"#,
            r#"{"data": {"directory": "d"}, "strategy": "uw-map", "epochs": 0}"#,
            r#"{"data": {"directory": "d"}, "strategy": "uw-map", "batch-size": 0}"#,
            r#"{"data": {"directory": "d"}, "strategy": "uw-map", "colour": 1}"#,
        ] {
            let e = RunConfig::from_json(bad).unwrap_err();
            assert_eq!(e.exit_code(), crate::error::exit::CONFIG);
        }
    }
}
