//! The five subcommands and the pipeline pieces they share.

use std::fs;
use std::path::Path;

use crackseg_core::bayesopt::{tune_with_initial, Params, SearchSpace, TuneResult};
use crackseg_core::dataset::pmap::{load_priors, save_priors};
use crackseg_core::dataset::pnm::save_mask;
use crackseg_core::dataset::{
    check_shapes, gen_synthetic, load_corpus, save_corpus, select, split_dataset, DatasetSplit,
    ImageSample,
};
use crackseg_core::decision::{map_rule, ml_rule};
use crackseg_core::metrics::{
    confusion, default_thresholds, mpa, pr_curve, ConfusionCounts, MetricsReport, PrCurve,
};
use crackseg_core::network::{self, init_params, ArchSpec, NetParams};
use crackseg_core::optim::OptimizerSpec;
use crackseg_core::priors::{
    global_frequencies, median_frequency_weights, prior_map_for, uniform_weights,
};
use crackseg_core::training::{masks_of, predict_all, train, TrainConfig, TrainOutcome};
use crackseg_core::{ClassWeights, Grid3, Mask, PriorMap, ProbMap};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, Rule, RunConfig, Strategy, Weighting};
use crate::error::{CliError, Result};
use crate::svg::pr_chart;

pub const METRICS_FILE: &str = "metrics.json";
pub const CURVE_FILE: &str = "pr_curve.csv";
pub const CURVE_SVG: &str = "pr_curve.svg";
pub const MODEL_FILE: &str = "model.netp";
pub const PRIORS_FILE: &str = "priors.pmap";
pub const LOG_FILE: &str = "log.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const TUNE_FILE: &str = "tune.json";
pub const COMPARE_FILE: &str = "compare.csv";
pub const COMPARE_SVG: &str = "pr_curves.svg";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| crackseg_core::Error::io(path, e))?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| crackseg_core::Error::io(path, e))?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            path: path.to_path_buf(),
            what,
        })
    }
}

pub fn load_samples(source: &DataSource) -> Result<Vec<ImageSample>> {
    match source {
        DataSource::Synthetic(s) => Ok(gen_synthetic(s)?),
        DataSource::Directory(dir) => {
            require(dir, "corpus directory not found")?;
            Ok(load_corpus(dir)?)
        }
    }
}

/// A corpus with its split and the network shape it will be fed to.
pub struct Prepared {
    pub samples: Vec<ImageSample>,
    pub split: DatasetSplit,
    pub arch: ArchSpec,
}

impl Prepared {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let samples = load_samples(&cfg.data)?;
        let first = samples
            .first()
            .ok_or_else(|| crackseg_core::Error::Split("the corpus contains no images".into()))?;
        let arch = cfg
            .arch
            .clone()
            .unwrap_or_else(|| ArchSpec::default_for(first.dims().0, first.dims().1));
        check_shapes(&samples, arch.input_height, arch.input_width, arch.depth)?;
        let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
        let split = split_dataset(&ids, cfg.seed)?;
        Ok(Self {
            samples,
            split,
            arch,
        })
    }

    pub fn train_set(&self) -> Vec<&ImageSample> {
        select(&self.samples, &self.split.train).expect("split ids come from the corpus")
    }

    pub fn val_set(&self) -> Vec<&ImageSample> {
        select(&self.samples, &self.split.val).expect("split ids come from the corpus")
    }

    pub fn test_set(&self) -> Vec<&ImageSample> {
        select(&self.samples, &self.split.test).expect("split ids come from the corpus")
    }

    /// Per-position priors counted over the training masks.
    pub fn priors(&self, alpha: f64) -> Result<PriorMap> {
        let masks = masks_of(&self.train_set());
        Ok(prior_map_for(
            &masks,
            self.arch.input_height,
            self.arch.input_width,
            alpha,
        )?)
    }

    pub fn class_weights(&self, weighting: Weighting) -> Result<ClassWeights> {
        match weighting {
            Weighting::Uniform => Ok(uniform_weights()),
            Weighting::MedianFrequency => {
                let f = global_frequencies(&masks_of(&self.train_set()))?;
                Ok(median_frequency_weights(f)?)
            }
        }
    }

    /// Trains under the configured strategy with the given optimizer.
    pub fn fit(&self, cfg: &RunConfig, optimizer: &OptimizerSpec) -> Result<TrainOutcome> {
        let weights = self.class_weights(cfg.strategy.weighting())?;
        let init = init_params(&self.arch, cfg.seed)?;
        let tc = TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            snapshot: cfg.snapshot,
        };
        Ok(train(
            init,
            optimizer,
            &weights,
            &self.train_set(),
            &self.val_set(),
            &tc,
        )?)
    }
}

/// Decisions and scores for one strategy on one image set.
pub struct Scores {
    pub counts: ConfusionCounts,
    pub crack: MetricsReport,
    pub background: MetricsReport,
    /// Crack-class curve over the maps the rule thresholds at 0.5.
    pub curve: PrCurve,
    pub background_curve: PrCurve,
    pub predictions: Vec<Mask>,
}

/// The maps whose 0.5-threshold reproduces `rule`: the posterior itself
/// for MAP, the prior-adjusted posterior for ML.
pub fn ranking_maps(
    probs: &[ProbMap],
    rule: Rule,
    priors: Option<&PriorMap>,
) -> Result<Vec<ProbMap>> {
    match (rule, priors) {
        (Rule::Map, _) => Ok(probs.to_vec()),
        (Rule::Ml, Some(q)) => Ok(probs
            .iter()
            .map(|p| p.prior_adjusted(q))
            .collect::<crackseg_core::Result<_>>()?),
        (Rule::Ml, None) => Err(CliError::Config("the ML rule needs priors".into())),
    }
}

fn swap_classes(p: &ProbMap) -> ProbMap {
    let g = p.grid();
    let swapped = Grid3::from_fn(g.height(), g.width(), 2, |y, x, c| g.get(y, x, 1 - c));
    ProbMap::new(swapped).expect("a permuted distribution is still a distribution")
}

pub fn score(
    probs: &[ProbMap],
    truths: &[Mask],
    rule: Rule,
    priors: Option<&PriorMap>,
) -> Result<Scores> {
    let ranked = ranking_maps(probs, rule, priors)?;
    let predictions: Vec<Mask> = match rule {
        Rule::Map => probs.iter().map(map_rule).collect(),
        Rule::Ml => {
            let q = priors.expect("checked by ranking_maps");
            probs
                .iter()
                .map(|p| ml_rule(p, q))
                .collect::<crackseg_core::Result<_>>()?
        }
    };
    let counts = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| confusion(p, t))
        .sum::<crackseg_core::Result<ConfusionCounts>>()?;
    let thresholds = default_thresholds();
    let curve = pr_curve(&ranked, truths, &thresholds)?;
    let flipped: Vec<ProbMap> = ranked.iter().map(swap_classes).collect();
    let inverted: Vec<Mask> = truths
        .iter()
        .map(|m| Mask::from_fn(m.height(), m.width(), |y, x| !m.get(y, x)))
        .collect();
    let background_curve = pr_curve(&flipped, &inverted, &thresholds)?;
    Ok(Scores {
        crack: MetricsReport::from_counts(&counts, mpa(&curve)?),
        background: MetricsReport::from_counts(&counts.background_view(), mpa(&background_curve)?),
        counts,
        curve,
        background_curve,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsFile {
    pub strategy: Strategy,
    pub images: usize,
    pub counts: ConfusionCounts,
    pub crack: MetricsReport,
    pub background: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ManifestEntry {
    pub id: String,
    pub crack_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Manifest {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub mean_crack_fraction: f64,
    pub samples: Vec<ManifestEntry>,
}

/// Writes the synthetic corpus described by the config plus a manifest.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let DataSource::Synthetic(sc) = &cfg.data else {
        return Err(CliError::Config(
            "synth needs a synthetic data source".into(),
        ));
    };
    let samples = gen_synthetic(sc)?;
    create_dir(out)?;
    save_corpus(&samples, out)?;
    let entries: Vec<ManifestEntry> = samples
        .iter()
        .map(|s| ManifestEntry {
            id: s.id.clone(),
            crack_fraction: s.mask.crack_fraction(),
        })
        .collect();
    let total: usize = samples.iter().map(|s| s.mask.len()).sum();
    let crack: usize = samples.iter().map(|s| s.mask.crack_count()).sum();
    let manifest = Manifest {
        count: samples.len(),
        height: sc.height,
        width: sc.width,
        seed: sc.seed,
        mean_crack_fraction: crack as f64 / total as f64,
        samples: entries,
    };
    write(&out.join(MANIFEST_FILE), to_json(&manifest))?;
    Ok(manifest)
}

fn write_model(
    out: &Path,
    outcome: &TrainOutcome,
    priors: &PriorMap,
    split: &DatasetSplit,
) -> Result<()> {
    create_dir(out)?;
    network::io::save(&outcome.params, out.join(MODEL_FILE))?;
    save_priors(priors, out.join(PRIORS_FILE))?;
    write(&out.join(LOG_FILE), outcome.log_csv())?;
    write(&out.join(SPLIT_FILE), to_json(split))?;
    Ok(())
}

/// Trains under the config's strategy and writes the model, the training
/// priors, the per-epoch log and the split.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let prep = Prepared::load(cfg)?;
    let priors = prep.priors(cfg.prior_alpha)?;
    let outcome = prep.fit(cfg, &cfg.optimizer)?;
    write_model(out, &outcome, &priors, &prep.split)?;
    Ok(outcome)
}

/// Scores the test split under the config's strategy.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<MetricsFile> {
    let prep = Prepared::load(cfg)?;
    let model_path = cfg.model_path(out);
    require(&model_path, "model file not found; run train first")?;
    let params: NetParams = network::io::load(&model_path)?;
    check_shapes(
        &prep.samples,
        params.arch.input_height,
        params.arch.input_width,
        params.arch.depth,
    )?;
    let priors = match cfg.strategy.rule() {
        Rule::Map => None,
        Rule::Ml => {
            let path = cfg.priors_path(out);
            require(
                &path,
                "prior file not found; ML decisions need training priors",
            )?;
            let q = load_priors(&path)?;
            if q.dims() != (params.arch.input_height, params.arch.input_width) {
                return Err(crackseg_core::Error::Shape(format!(
                    "priors are {:?}, model input is {:?}",
                    q.dims(),
                    (params.arch.input_height, params.arch.input_width)
                ))
                .into());
            }
            Some(q)
        }
    };
    let test = prep.test_set();
    let probs = predict_all(&params, &test)?;
    let truths = masks_of(&test);
    let scores = score(&probs, &truths, cfg.strategy.rule(), priors.as_ref())?;

    create_dir(out)?;
    let report = MetricsFile {
        strategy: cfg.strategy,
        images: test.len(),
        counts: scores.counts,
        crack: scores.crack,
        background: scores.background,
    };
    write(&out.join(METRICS_FILE), to_json(&report))?;
    write(&out.join(CURVE_FILE), scores.curve.to_csv())?;
    write(
        &out.join(CURVE_SVG),
        pr_chart(&[(cfg.strategy.name(), &scores.curve)]),
    )?;
    let masks_dir = out.join("masks");
    create_dir(&masks_dir)?;
    for (s, m) in test.iter().zip(&scores.predictions) {
        save_mask(m, masks_dir.join(format!("{}.pgm", s.id)))?;
    }
    Ok(report)
}

/// Copies named hyperparameters onto an optimizer spec.
pub fn apply_params(base: &OptimizerSpec, params: &Params) -> Result<OptimizerSpec> {
    let mut spec = *base;
    for (name, &v) in params {
        let slot = match name.as_str() {
            "learning-rate" => &mut spec.learning_rate,
            "momentum" => &mut spec.momentum,
            "rho" => &mut spec.rho,
            "beta1" => &mut spec.beta1,
            "beta2" => &mut spec.beta2,
            "epsilon" => &mut spec.epsilon,
            other => {
                return Err(CliError::Config(format!(
                    "search dimension {other:?} is not an optimizer hyperparameter"
                )))
            }
        };
        *slot = v;
    }
    Ok(spec)
}

fn current_values(spec: &OptimizerSpec, space: &SearchSpace) -> Option<Vec<f64>> {
    let v: Vec<f64> = space
        .dimensions
        .iter()
        .map(|d| match d.name.as_str() {
            "learning-rate" => spec.learning_rate,
            "momentum" => spec.momentum,
            "rho" => spec.rho,
            "beta1" => spec.beta1,
            "beta2" => spec.beta2,
            _ => spec.epsilon,
        })
        .collect();
    let inside = space
        .dimensions
        .iter()
        .zip(&v)
        .all(|(d, &x)| x >= d.lower && x <= d.upper);
    inside.then_some(v)
}

/// Validation MPA of a model trained with `optimizer`, under the strategy's
/// decision rule.
pub fn validation_mpa(
    cfg: &RunConfig,
    prep: &Prepared,
    priors: &PriorMap,
    optimizer: &OptimizerSpec,
) -> Result<f64> {
    let outcome = prep.fit(cfg, optimizer)?;
    let val = prep.val_set();
    let probs = predict_all(&outcome.params, &val)?;
    let ranked = ranking_maps(&probs, cfg.strategy.rule(), Some(priors))?;
    Ok(mpa(&pr_curve(
        &ranked,
        &masks_of(&val),
        &default_thresholds(),
    )?)?)
}

/// Bayesian search over the configured space, objective = validation MPA.
/// The config's own optimizer settings are evaluated first when they lie in
/// the space. The model is retrained at the best point and written out.
pub fn cmd_tune(cfg: &RunConfig, out: &Path) -> Result<TuneResult> {
    let space = &cfg.tune.space;
    if cfg.tune.budget < 4 {
        return Err(CliError::Config(format!(
            "tune budget {} is below 4",
            cfg.tune.budget
        )));
    }
    let probe: Params = space.names().map(|n| (n.to_string(), 0.0)).collect();
    apply_params(&cfg.optimizer, &probe)?;
    let prep = Prepared::load(cfg)?;
    let priors = prep.priors(cfg.prior_alpha)?;
    let forced: Vec<Vec<f64>> = current_values(&cfg.optimizer, space).into_iter().collect();
    let result = tune_with_initial(
        |params| {
            let spec = apply_params(&cfg.optimizer, params)
                .map_err(|e| crackseg_core::Error::Tune(e.to_string()))?;
            spec.validate()?;
            validation_mpa(cfg, &prep, &priors, &spec)
                .map_err(|e| crackseg_core::Error::Tune(e.to_string()))
        },
        space,
        cfg.tune.budget,
        cfg.seed,
        &forced,
    )?;
    let best = apply_params(&cfg.optimizer, &result.best)?;
    let outcome = prep.fit(cfg, &best)?;
    write_model(out, &outcome, &priors, &prep.split)?;
    write(&out.join(TUNE_FILE), to_json(&result))?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub crack: MetricsReport,
    pub background: MetricsReport,
}

pub const COMPARE_HEADER: &str = "strategy,crack_precision,crack_recall,crack_f1,crack_mpa,\
background_precision,background_recall,background_f1,background_mpa";

impl CompareRow {
    fn csv(&self) -> String {
        let c = &self.crack;
        let b = &self.background;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.label, c.precision, c.recall, c.f1, c.mpa, b.precision, b.recall, b.f1, b.mpa
        )
    }
}

fn mean_report(rows: &[CompareRow], pick: impl Fn(&CompareRow) -> &MetricsReport) -> MetricsReport {
    let n = rows.len() as f64;
    let avg = |f: &dyn Fn(&MetricsReport) -> f64| rows.iter().map(|r| f(pick(r))).sum::<f64>() / n;
    MetricsReport {
        precision: avg(&|m| m.precision),
        recall: avg(&|m| m.recall),
        f1: avg(&|m| m.f1),
        mpa: avg(&|m| m.mpa),
        global_accuracy: avg(&|m| m.global_accuracy),
    }
}

/// One row per finished evaluation, then their mean; values are copied
/// from each `metrics.json` unchanged.
pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<Vec<CompareRow>> {
    if cfg.compare.is_empty() {
        return Err(CliError::Config(
            "compare needs a list of evaluation directories".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut curves: Vec<(String, PrCurve)> = Vec::new();
    for dir in &cfg.compare {
        let mpath = dir.join(METRICS_FILE);
        let cpath = dir.join(CURVE_FILE);
        require(
            &mpath,
            "strategy output missing metrics.json; run eval first",
        )?;
        require(
            &cpath,
            "strategy output missing pr_curve.csv; run eval first",
        )?;
        let text = read_text(&mpath)?;
        let m: MetricsFile =
            serde_json::from_str(&text).map_err(|e| crackseg_core::Error::Format {
                field: "metrics",
                detail: format!("{}: {e}", mpath.display()),
            })?;
        curves.push((
            m.strategy.name().to_string(),
            PrCurve::from_csv(&read_text(&cpath)?)?,
        ));
        rows.push(CompareRow {
            label: m.strategy.name().to_string(),
            crack: m.crack,
            background: m.background,
        });
    }
    let mean = CompareRow {
        label: "mean".into(),
        crack: mean_report(&rows, |r| &r.crack),
        background: mean_report(&rows, |r| &r.background),
    };
    let mut csv = format!("{COMPARE_HEADER}\n");
    for r in rows.iter().chain(std::iter::once(&mean)) {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    create_dir(out)?;
    write(&out.join(COMPARE_FILE), csv)?;
    let named: Vec<(&str, &PrCurve)> = curves.iter().map(|(n, c)| (n.as_str(), c)).collect();
    write(&out.join(COMPARE_SVG), pr_chart(&named))?;
    rows.push(mean);
    Ok(rows)
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).map_err(|e| crackseg_core::Error::io(path, e))?)
}
