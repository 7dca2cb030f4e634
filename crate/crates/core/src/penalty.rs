//! Per-feature penalty coefficients.
//!
//! Each feature gets `lambda_i = (1 - gamma) * lambda0 + gamma * g(x_i)`,
//! clamped to `[LAMBDA_FLOOR, 1]`. `lambda0` is a penalty shared by all
//! features, `g` a feature-specific weight in `[0, 1]`, and `gamma` mixes the
//! two. With `gamma = 0` every feature receives `lambda0`.
//!
//! Entropy and mutual information are plug-in estimates in bits with
//! `0 log 0 = 0`. Continuous columns are discretized first, see
//! [`discretize`].

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target, Task};
use crate::ensemble::{forest_importance, train_forest_unpenalized, ForestConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tags};
use crate::tree::GrowConfig;

/// Smallest coefficient a feature can receive, so no feature is ever
/// excluded outright.
pub const LAMBDA_FLOOR: f64 = 1e-6;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Spearman,
    Kendall,
}

impl FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            "kendall" => Ok(Self::Kendall),
            other => Err(Error::Config(format!("unknown correlation kind `{other}`"))),
        }
    }
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pearson => "pearson",
            Self::Spearman => "spearman",
            Self::Kendall => "kendall",
        })
    }
}

/// Where boosted importances come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceOrigin {
    /// A standard random forest trained on the same data (see [`GuideForest`]).
    InternalForest,
    /// Non-negative importances read from a `feature,importance` file.
    External,
}

/// Source of the feature weight `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GSource {
    /// `g = 1` for every feature.
    Constant,
    Correlation {
        method: CorrelationKind,
    },
    Entropy {
        bins: usize,
    },
    MutualInformation {
        bins: usize,
    },
    Boosted {
        origin: ImportanceOrigin,
    },
    /// Absolute correlation where it exceeds `epsilon`, normalized
    /// importance elsewhere.
    Combined {
        epsilon: f64,
        method: CorrelationKind,
        fallback: ImportanceOrigin,
    },
}

impl GSource {
    /// Short name used in result files and on the command line.
    pub fn name(&self) -> String {
        match self {
            GSource::Constant => "constant".into(),
            GSource::Correlation { method } => format!("correlation-{method}"),
            GSource::Entropy { .. } => "entropy".into(),
            GSource::MutualInformation { .. } => "mutual-information".into(),
            GSource::Boosted {
                origin: ImportanceOrigin::InternalForest,
            } => "boosted-rf".into(),
            GSource::Boosted {
                origin: ImportanceOrigin::External,
            } => "boosted-external".into(),
            GSource::Combined { fallback, .. } => match fallback {
                ImportanceOrigin::InternalForest => "combined-rf".into(),
                ImportanceOrigin::External => "combined-external".into(),
            },
        }
    }

    /// Parse a command-line name; parameters not carried by the name come
    /// from `params`.
    pub fn parse(name: &str, params: &GParams) -> Result<Self> {
        let g = match name {
            "constant" => GSource::Constant,
            "correlation" => GSource::Correlation {
                method: params.correlation,
            },
            "entropy" => GSource::Entropy { bins: params.bins },
            "mutual-information" => GSource::MutualInformation { bins: params.bins },
            "boosted-rf" => GSource::Boosted {
                origin: ImportanceOrigin::InternalForest,
            },
            "boosted-external" => GSource::Boosted {
                origin: ImportanceOrigin::External,
            },
            "combined-rf" | "combined" => GSource::Combined {
                epsilon: params.epsilon,
                method: params.correlation,
                fallback: ImportanceOrigin::InternalForest,
            },
            "combined-external" => GSource::Combined {
                epsilon: params.epsilon,
                method: params.correlation,
                fallback: ImportanceOrigin::External,
            },
            other => {
                if let Some(kind) = other.strip_prefix("correlation-") {
                    GSource::Correlation {
                        method: kind.parse()?,
                    }
                } else {
                    return Err(Error::Config(format!("unknown g source `{other}`")));
                }
            }
        };
        g.validate()?;
        Ok(g)
    }

    pub fn importance_origin(&self) -> Option<ImportanceOrigin> {
        match *self {
            GSource::Boosted { origin } => Some(origin),
            GSource::Combined { fallback, .. } => Some(fallback),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GSource::Entropy { bins } | GSource::MutualInformation { bins } if bins < 2 => {
                Err(Error::Config(format!("bins must be at least 2, got {bins}")))
            }
            GSource::Combined { epsilon, .. } if !(epsilon > 0.0 && epsilon < 1.0) => Err(Error::Config(
                format!("epsilon must lie in (0, 1), got {epsilon}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Parameters shared by the named g sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GParams {
    pub bins: usize,
    pub epsilon: f64,
    pub correlation: CorrelationKind,
}

impl Default for GParams {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            epsilon: 0.5,
            correlation: CorrelationKind::Pearson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda0: f64,
    pub gamma: f64,
    pub g: GSource,
    pub depth_penalty: bool,
}

impl PenaltySpec {
    /// Every lambda equal to 1: an ordinary forest.
    pub fn standard() -> Self {
        Self {
            lambda0: 1.0,
            gamma: 0.0,
            g: GSource::Constant,
            depth_penalty: false,
        }
    }

    /// `lambda0` may also be exactly 1, which together with `gamma = 0`
    /// spells out the unpenalized forest.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda0) {
            return Err(Error::Config(format!(
                "lambda0 must lie in [0, 1), got {}",
                self.lambda0
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        self.g.validate()
    }
}

/// Per-feature penalty coefficients, each in `[LAMBDA_FLOOR, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LambdaVector(Vec<f64>);

impl LambdaVector {
    /// Clamps each value into `[LAMBDA_FLOOR, 1]`.
    pub fn new(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(clamp_lambda).collect())
    }

    pub fn ones(p: usize) -> Self {
        Self(vec![1.0; p])
    }

    pub fn uniform(p: usize, lambda: f64) -> Self {
        Self::new(vec![lambda; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when penalization cannot change any split.
    pub fn is_inert(&self) -> bool {
        self.0.iter().all(|&l| l == 1.0)
    }

    pub fn select(&self, features: &[usize]) -> Self {
        Self(features.iter().map(|&f| self.0[f]).collect())
    }
}

fn clamp_lambda(l: f64) -> f64 {
    l.clamp(LAMBDA_FLOOR, 1.0)
}

/// `(1 - gamma) * lambda0 + gamma * g`, before clamping.
pub fn mix_lambda(lambda0: f64, gamma: f64, g: f64) -> f64 {
    (1.0 - gamma) * lambda0 + gamma * g
}

/// Compute the feature weights `g` for `spec.g` on `data`. `importances` is
/// required for boosted and combined sources.
pub fn compute_g(g: &GSource, data: &Dataset, importances: Option<&[f64]>) -> Result<Vec<f64>> {
    g.validate()?;
    let need =
        |what: &str| importances.ok_or_else(|| Error::Config(format!("g source `{what}` needs importances")));
    match *g {
        GSource::Constant => Ok(vec![1.0; data.n_features()]),
        GSource::Correlation { method } => g_correlation(data, method),
        GSource::Entropy { bins } => g_entropy(data, bins),
        GSource::MutualInformation { bins } => g_mutual_information(data, bins),
        GSource::Boosted { .. } => g_boosted(check_len(need(&g.name())?, data)?),
        GSource::Combined { epsilon, method, .. } => {
            g_combined(data, epsilon, check_len(need(&g.name())?, data)?, method)
        }
    }
}

fn check_len<'a>(imp: &'a [f64], data: &Dataset) -> Result<&'a [f64]> {
    if imp.len() != data.n_features() {
        return Err(Error::Config(format!(
            "{} importances for {} features",
            imp.len(),
            data.n_features()
        )));
    }
    Ok(imp)
}

pub fn compute_lambdas(
    spec: &PenaltySpec,
    data: &Dataset,
    importances: Option<&[f64]>,
) -> Result<LambdaVector> {
    spec.validate()?;
    if spec.gamma == 0.0 {
        return Ok(LambdaVector::uniform(data.n_features(), spec.lambda0));
    }
    let g = compute_g(&spec.g, data, importances)?;
    Ok(LambdaVector::new(
        g.iter()
            .map(|&g| mix_lambda(spec.lambda0, spec.gamma, g))
            .collect(),
    ))
}

fn regression_response<'a>(data: &'a Dataset, what: &str) -> Result<&'a [f64]> {
    data.response()
        .ok_or_else(|| Error::Config(format!("{what} needs a regression target")))
}

/// `|corr(y, x_i)|` for every feature.
pub fn g_correlation(data: &Dataset, kind: CorrelationKind) -> Result<Vec<f64>> {
    let y = regression_response(data, "correlation weighting")?;
    if is_constant(y) {
        return Err(Error::UndefinedWeight {
            features: data.feature_names().to_vec(),
            reason: "target has zero variance".into(),
        });
    }
    let constant: Vec<String> = data
        .feature_names()
        .iter()
        .zip(data.columns())
        .filter(|(_, c)| is_constant(c))
        .map(|(n, _)| n.clone())
        .collect();
    if !constant.is_empty() {
        return Err(Error::UndefinedWeight {
            features: constant,
            reason: "zero variance, correlation undefined".into(),
        });
    }
    let y_ranks = matches!(kind, CorrelationKind::Spearman).then(|| average_ranks(y));
    Ok(data
        .columns()
        .iter()
        .map(|x| {
            let r = match kind {
                CorrelationKind::Pearson => pearson(x, y),
                CorrelationKind::Spearman => {
                    pearson(&average_ranks(x), y_ranks.as_deref().unwrap_or_default())
                }
                CorrelationKind::Kendall => kendall_tau_b(x, y),
            };
            r.abs().min(1.0)
        })
        .collect())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    sxy / (sxx * syy).sqrt()
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Kendall's tau-b, by direct enumeration of pairs.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            if dx == 0 && dy == 0 {
                continue;
            } else if dx == 0 {
                ties_x += 1;
            } else if dy == 0 {
                ties_y += 1;
            } else if dx == dy {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n1 = (concordant + discordant + ties_x) as f64;
    let n2 = (concordant + discordant + ties_y) as f64;
    (concordant - discordant) as f64 / (n1 * n2).sqrt()
}

/// Map values to discrete states.
///
/// A column with at most `bins` distinct values keeps one state per distinct
/// value. Otherwise equal-frequency binning is used: with the values sorted
/// ascending as `s`, the cut points are `s[floor(k * n / bins)]` for
/// `k = 1..bins` (duplicates dropped) and a value's state is the number of
/// cut points `<=` it. Equal values always share a state.
pub fn discretize(values: &[f64], bins: usize) -> Vec<u32> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= bins {
        return values
            .iter()
            .map(|v| distinct.partition_point(|d| d < v) as u32)
            .collect();
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..bins).map(|k| sorted[k * n / bins]).collect();
    cuts.dedup();
    values
        .iter()
        .map(|v| cuts.partition_point(|c| c <= v) as u32)
        .collect()
}

/// Shannon entropy in bits of a vector of counts.
pub fn entropy_from_counts(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Mutual information in bits of a contingency table `table[x][y]`.
pub fn mutual_information_from_counts(table: &[Vec<u64>]) -> f64 {
    let n: u64 = table.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let width = table.iter().map(Vec::len).max().unwrap_or(0);
    let cols: Vec<u64> = (0..width)
        .map(|j| table.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum())
        .collect();
    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let ratio = (c as u128 * n as u128) as f64 / (rows[i] as u128 * cols[j] as u128) as f64;
            mi += c as f64 / nf * ratio.log2();
        }
    }
    mi.max(0.0)
}

fn state_counts(states: &[u32]) -> Vec<u64> {
    let k = states.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut counts = vec![0u64; k];
    for &s in states {
        counts[s as usize] += 1;
    }
    counts
}

fn contingency(x: &[u32], y: &[u32]) -> Vec<Vec<u64>> {
    let kx = x.iter().copied().max().map_or(0, |m| m as usize + 1);
    let ky = y.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut table = vec![vec![0u64; ky]; kx];
    for (&a, &b) in x.iter().zip(y) {
        table[a as usize][b as usize] += 1;
    }
    table
}

/// Entropy in bits of each feature after [`discretize`].
pub fn feature_entropies(data: &Dataset, bins: usize) -> Vec<f64> {
    data.columns()
        .iter()
        .map(|c| entropy_from_counts(&state_counts(&discretize(c, bins))))
        .collect()
}

/// `1 - H(x_i) / max_j H(x_j)`: low-entropy features get large weights.
pub fn g_entropy(data: &Dataset, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::Config(format!("bins must be at least 2, got {bins}")));
    }
    let h = feature_entropies(data, bins);
    let max = h.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::UndefinedWeight {
            features: data.feature_names().to_vec(),
            reason: "every feature is constant (zero entropy)".into(),
        });
    }
    Ok(h.iter().map(|&v| (1.0 - v / max).clamp(0.0, 1.0)).collect())
}

/// Target states used for mutual information: class codes, or the
/// discretized response.
fn target_states(data: &Dataset, bins: usize) -> Vec<u32> {
    match data.target() {
        Target::Classification { codes, .. } => codes.clone(),
        Target::Regression(y) => discretize(y, bins),
    }
}

/// Mutual information in bits between each discretized feature and the target.
pub fn feature_mutual_information(data: &Dataset, bins: usize) -> Vec<f64> {
    let y = target_states(data, bins);
    data.columns()
        .iter()
        .map(|c| mutual_information_from_counts(&contingency(&discretize(c, bins), &y)))
        .collect()
}

/// `MI(x_i, y) / max_j MI(x_j, y)`.
pub fn g_mutual_information(data: &Dataset, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::Config(format!("bins must be at least 2, got {bins}")));
    }
    let mi = feature_mutual_information(data, bins);
    let max = mi.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::UndefinedWeight {
            features: data.feature_names().to_vec(),
            reason: "no feature shares information with the target".into(),
        });
    }
    Ok(mi.iter().map(|&v| v / max).collect())
}

/// Importances scaled by their maximum.
pub fn g_boosted(importances: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = importances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Config(format!(
            "importances must be finite and non-negative, found {bad}"
        )));
    }
    let max = importances.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Config("importances are all zero".into()));
    }
    Ok(importances.iter().map(|&v| v / max).collect())
}

pub fn g_combined(data: &Dataset, epsilon: f64, fallback: &[f64], kind: CorrelationKind) -> Result<Vec<f64>> {
    let corr = g_correlation(data, kind)?;
    let boosted = g_boosted(fallback)?;
    Ok(corr
        .into_iter()
        .zip(boosted)
        .map(|(c, b)| if c > epsilon { c } else { b })
        .collect())
}

/// The standard forest whose importances feed boosted weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideForest {
    pub ntree: usize,
    /// Defaults to `floor(sqrt(p))`.
    pub mtry: Option<usize>,
}

impl Default for GuideForest {
    fn default() -> Self {
        Self {
            ntree: 500,
            mtry: None,
        }
    }
}

/// `floor(sqrt(p))`, at least 1.
pub fn sqrt_mtry(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).max(1)
}

impl GuideForest {
    /// Train the guide forest (bootstrap on, no penalization) with master
    /// seed `derive_seed(seed, GUIDE)` and return its importances.
    pub fn importances(&self, data: &Dataset, seed: u64) -> Result<Vec<f64>> {
        let p = data.n_features();
        let mut grow = GrowConfig::new(self.mtry.unwrap_or_else(|| sqrt_mtry(p)), data.task());
        grow.mtry = grow.mtry.min(p);
        let config = ForestConfig {
            ntree: self.ntree,
            grow,
            bootstrap: true,
            master_seed: derive_seed(seed, tags::GUIDE),
        };
        Ok(forest_importance(&train_forest_unpenalized(data, &config)?))
    }
}

/// Read a `feature,importance` CSV naming every dataset feature exactly once.
pub fn load_importances(path: &Path, feature_names: &[String]) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let parse_err = |row: u64, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.into(),
        message,
    };
    let header = reader.headers()?.clone();
    if header.len() != 2 || &header[0] != "feature" || &header[1] != "importance" {
        return Err(parse_err(1, "", "expected header `feature,importance`".into()));
    }
    let index: HashMap<&str, usize> = feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut values: Vec<Option<f64>> = vec![None; feature_names.len()];
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let name = &record[0];
        let &i = index
            .get(name)
            .ok_or_else(|| parse_err(row, "feature", format!("unknown feature `{name}`")))?;
        let v: f64 = record[1]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| {
                parse_err(
                    row,
                    "importance",
                    format!("`{}` is not a non-negative number", &record[1]),
                )
            })?;
        if values[i].replace(v).is_some() {
            return Err(parse_err(
                row,
                "feature",
                format!("feature `{name}` listed twice"),
            ));
        }
    }
    let missing: Vec<&str> = values
        .iter()
        .zip(feature_names)
        .filter(|(v, _)| v.is_none())
        .map(|(_, n)| n.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "{}: no importance for {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(values.into_iter().map(Option::unwrap_or_default).collect())
}

/// Check that a g source fits the task.
pub fn check_task(g: &GSource, task: Task) -> Result<()> {
    match g {
        GSource::Correlation { .. } | GSource::Combined { .. } if task != Task::Regression => Err(
            Error::Config(format!("g source `{}` needs a regression target", g.name())),
        ),
        _ => Ok(()),
    }
}
