//! Select with a regularized forest, then evaluate a standard forest trained
//! on the selected features only.
//!
//! Resample `r` uses seed `s = derive_seed(seed, r)`: the split is drawn
//! with `derive_seed(s, SPLIT)`, both stages train with master seed
//! `derive_seed(s, FOREST)` and the guide forest, if any, is seeded from `s`.
//! The refit forest draws `mtry` with the same rule applied to the number of
//! selected features, so a selection of every feature reproduces the
//! stage-one forest exactly.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{metric_name, table2_metrics, test_metric, ExperimentRecord};
use crate::data::{split_train_test, standardize_target, Dataset, Task};
use crate::ensemble::{
    majority_vote, selected_features, train_forest, train_forest_unpenalized, ForestConfig,
};
use crate::error::{Error, Result};
use crate::penalty::{
    check_task, compute_lambdas, load_importances, sqrt_mtry, GuideForest, ImportanceOrigin, PenaltySpec,
};
use crate::rng::{derive_seed, tags};
use crate::simulation::GroundTruth;
use crate::tree::GrowConfig;

/// How many candidate features to draw, as a function of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MtryRule {
    /// `floor(sqrt(p))`.
    Sqrt,
    /// `floor(f * p)`.
    Fraction(f64),
    Fixed(usize),
}

impl MtryRule {
    /// Always within `[1, p]` for `p >= 1`.
    pub fn resolve(&self, p: usize) -> usize {
        let m = match *self {
            MtryRule::Sqrt => sqrt_mtry(p),
            MtryRule::Fraction(f) => (f * p as f64).floor() as usize,
            MtryRule::Fixed(m) => m,
        };
        m.clamp(1, p.max(1))
    }

    /// The grid used for the micro-array comparison.
    pub fn paper_grid() -> Vec<MtryRule> {
        vec![
            MtryRule::Sqrt,
            MtryRule::Fraction(0.15),
            MtryRule::Fraction(0.40),
            MtryRule::Fraction(0.75),
            MtryRule::Fraction(0.95),
        ]
    }
}

impl fmt::Display for MtryRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MtryRule::Sqrt => write!(f, "sqrt"),
            MtryRule::Fraction(x) => write!(f, "{x}p"),
            MtryRule::Fixed(m) => write!(f, "{m}"),
        }
    }
}

/// Accepts `sqrt`, a fraction of `p` such as `0.15p`, or a count.
impl FromStr for MtryRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "sqrt" {
            return Ok(MtryRule::Sqrt);
        }
        if let Some(f) = s.strip_suffix('p') {
            return match f.parse::<f64>() {
                Ok(f) if f > 0.0 && f <= 1.0 => Ok(MtryRule::Fraction(f)),
                _ => Err(Error::Config(format!("mtry fraction `{s}` must lie in (0, 1]"))),
            };
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(MtryRule::Fixed(m)),
            _ => Err(Error::Config(format!(
                "mtry `{s}` is not `sqrt`, a fraction like `0.15p`, or a positive count"
            ))),
        }
    }
}

/// Settings shared by both stages of one select-then-refit run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefitStage {
    pub penalty: PenaltySpec,
    pub mtry: MtryRule,
    pub ntree: usize,
    pub bootstrap: bool,
    pub min_node_size: Option<usize>,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl RefitStage {
    fn forest_config(&self, p: usize, task: Task) -> ForestConfig {
        let mut grow = GrowConfig::new(self.mtry.resolve(p), task);
        if let Some(m) = self.min_node_size {
            grow.min_node_size = m;
        }
        grow.max_depth = self.max_depth;
        grow.depth_penalty = self.penalty.depth_penalty;
        ForestConfig {
            ntree: self.ntree,
            grow,
            bootstrap: self.bootstrap,
            master_seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitOutcome {
    /// Stage-one mtry and selection, stage-two test metric.
    pub record: ExperimentRecord,
    pub refit_mtry: usize,
    /// Stage one selected nothing; the metric is that of the constant
    /// training-set predictor.
    pub degenerate: bool,
}

/// Run both stages on one train/test split. `importances` feeds boosted
/// sources.
pub fn select_then_refit(
    train: &Dataset,
    test: &Dataset,
    truth: Option<&GroundTruth>,
    stage: &RefitStage,
    importances: Option<&[f64]>,
) -> Result<RefitOutcome> {
    check_task(&stage.penalty.g, train.task())?;
    let p = train.n_features();
    let config = stage.forest_config(p, train.task());
    let lambdas = compute_lambdas(&stage.penalty, train, importances)?;
    let selection = train_forest(train, &config, &lambdas)?;
    let selected = selected_features(&selection);

    let (metric, refit_mtry, degenerate) = if selected.is_empty() {
        (constant_metric(train, test)?, 0, true)
    } else {
        let restricted = train.select_features(&selected)?;
        let refit_config = stage.forest_config(selected.len(), train.task());
        let refit = train_forest_unpenalized(&restricted, &refit_config)?;
        (test_metric(&refit, test)?, refit_config.grow.mtry, false)
    };
    let pct = truth.map(|t| table2_metrics(&selected, t));
    Ok(RefitOutcome {
        record: ExperimentRecord {
            replicate: 0,
            mtry: config.grow.mtry,
            lambda0: stage.penalty.lambda0,
            gamma: stage.penalty.gamma,
            g: stage.penalty.g.name(),
            metric_name: metric_name(train.task()).into(),
            metric,
            n_selected: selected.len(),
            pct_important: pct.map(|p| p.0),
            pct_correlated: pct.map(|p| p.1),
            selected_features: selected,
        },
        refit_mtry,
        degenerate,
    })
}

/// Test metric of predicting the training mean or majority class.
fn constant_metric(train: &Dataset, test: &Dataset) -> Result<f64> {
    match (train.response(), test.response()) {
        (Some(y), Some(y_test)) => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            super::rmse(&vec![mean; y_test.len()], y_test)
        }
        _ => {
            let codes = train.class_codes().unwrap_or_default();
            let truth = test.class_codes().unwrap_or_default();
            let majority = majority_vote(codes.iter().map(|&c| c as usize), train.n_classes()) as u32;
            super::misclassification_rate(&vec![majority; truth.len()], truth)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitConfig {
    pub resamples: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub ntree: usize,
    pub mtry: Vec<MtryRule>,
    pub penalty: PenaltySpec,
    pub bootstrap: bool,
    pub standardize: bool,
    pub min_node_size: Option<usize>,
    pub max_depth: Option<usize>,
    pub guide: GuideForest,
    pub importance_file: Option<PathBuf>,
}

impl Default for RefitConfig {
    fn default() -> Self {
        Self {
            resamples: 50,
            train_fraction: 2.0 / 3.0,
            seed: 1,
            ntree: 100,
            mtry: MtryRule::paper_grid(),
            penalty: PenaltySpec::standard(),
            bootstrap: true,
            standardize: true,
            min_node_size: None,
            max_depth: None,
            guide: GuideForest::default(),
            importance_file: None,
        }
    }
}

impl RefitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::Config("resamples must be at least 1".into()));
        }
        if self.mtry.is_empty() {
            return Err(Error::Config("mtry list is empty".into()));
        }
        if self.ntree == 0 {
            return Err(Error::Config("ntree must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        self.penalty.validate()?;
        let external = self.penalty.g.importance_origin() == Some(ImportanceOrigin::External);
        if external != self.importance_file.is_some() {
            return Err(Error::Config(
                "importance_file is required exactly when g uses external importances".into(),
            ));
        }
        Ok(())
    }
}

/// Averages over the mtry list for one resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub resample: usize,
    pub metric: f64,
    pub n_selected: f64,
    /// `n_selected / p`.
    pub fraction_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitSummary {
    pub metric_name: String,
    pub resamples: Vec<ResampleSummary>,
    pub mean_metric: f64,
    pub sd_metric: f64,
    pub mean_n_selected: f64,
    pub mean_fraction_selected: f64,
    /// Resample with the smallest metric; ties go to the earliest.
    pub best: ResampleSummary,
    pub n_degenerate: usize,
}

/// Repeat select-then-refit over `resamples` random splits of `data` and
/// every mtry rule. Records are ordered resample first, then mtry.
pub fn run_refit(
    data: &Dataset,
    config: &RefitConfig,
    truth: Option<&GroundTruth>,
) -> Result<(Vec<RefitOutcome>, RefitSummary)> {
    config.validate()?;
    check_task(&config.penalty.g, data.task())?;
    let p = data.n_features();
    let external = match &config.importance_file {
        Some(path) => Some(load_importances(path, data.feature_names())?),
        None => None,
    };
    let mut outcomes = Vec::with_capacity(config.resamples * config.mtry.len());
    let mut per_resample = Vec::with_capacity(config.resamples);
    for r in 0..config.resamples {
        let seed = derive_seed(config.seed, r as u64);
        let plan = split_train_test(
            data.n_rows(),
            config.train_fraction,
            derive_seed(seed, tags::SPLIT),
        )?;
        let (mut train, mut test) = plan.apply(data)?;
        if config.standardize && data.task() == Task::Regression {
            (train, test, _) = standardize_target(&train, &test)?;
        }
        let importances = match config.penalty.g.importance_origin() {
            Some(ImportanceOrigin::InternalForest) if config.penalty.gamma > 0.0 => {
                Some(config.guide.importances(&train, seed)?)
            }
            Some(ImportanceOrigin::External) => external.clone(),
            _ => None,
        };
        let mut metric = 0.0;
        let mut n_selected = 0.0;
        for rule in &config.mtry {
            let stage = RefitStage {
                penalty: config.penalty,
                mtry: *rule,
                ntree: config.ntree,
                bootstrap: config.bootstrap,
                min_node_size: config.min_node_size,
                max_depth: config.max_depth,
                seed: derive_seed(seed, tags::FOREST),
            };
            let mut outcome = select_then_refit(&train, &test, truth, &stage, importances.as_deref())?;
            outcome.record.replicate = r;
            metric += outcome.record.metric;
            n_selected += outcome.record.n_selected as f64;
            outcomes.push(outcome);
        }
        log::info!("resample {} of {} done", r + 1, config.resamples);
        let k = config.mtry.len() as f64;
        per_resample.push(ResampleSummary {
            resample: r,
            metric: metric / k,
            n_selected: n_selected / k,
            fraction_selected: n_selected / k / p as f64,
        });
    }
    let summary = summarize(metric_name(data.task()), per_resample, &outcomes);
    Ok((outcomes, summary))
}

fn summarize(metric_name: &str, resamples: Vec<ResampleSummary>, outcomes: &[RefitOutcome]) -> RefitSummary {
    let n = resamples.len() as f64;
    let mean = |f: fn(&ResampleSummary) -> f64| resamples.iter().map(f).sum::<f64>() / n;
    let mean_metric = mean(|s| s.metric);
    let sd_metric = if resamples.len() > 1 {
        (resamples
            .iter()
            .map(|s| (s.metric - mean_metric).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let best = resamples
        .iter()
        .fold(None::<&ResampleSummary>, |best, s| match best {
            Some(b) if b.metric <= s.metric => Some(b),
            _ => Some(s),
        })
        .cloned()
        .expect("at least one resample");
    RefitSummary {
        metric_name: metric_name.into(),
        mean_metric,
        sd_metric,
        mean_n_selected: mean(|s| s.n_selected),
        mean_fraction_selected: mean(|s| s.fraction_selected),
        best,
        n_degenerate: outcomes.iter().filter(|o| o.degenerate).count(),
        resamples,
    }
}
