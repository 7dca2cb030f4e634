//! Node cost, split gain, penalized gain and exhaustive split search.
//!
//! Regression nodes cost the total squared deviation from the node mean,
//! classification nodes their misclassification rate under majority vote.
//! The gain of splitting node `D` into `L` (values `<= t`) and `R` is
//!
//! ```text
//! gain = cost(D) - (|L|/|D| * cost(L) + |R|/|D| * cost(R))
//! ```
//!
//! taken literally for both tasks. A feature outside the ensemble's used set
//! has its gain multiplied by `lambda` (or `lambda^depth` in depth mode).

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};

/// Borrowed view of a target column.
#[derive(Debug, Clone, Copy)]
pub enum TargetRef<'a> {
    Regression(&'a [f64]),
    Classification { codes: &'a [u32], n_classes: usize },
}

impl<'a> From<&'a Target> for TargetRef<'a> {
    fn from(t: &'a Target) -> Self {
        match t {
            Target::Regression(y) => TargetRef::Regression(y),
            Target::Classification { codes, labels } => TargetRef::Classification {
                codes,
                n_classes: labels.len(),
            },
        }
    }
}

/// Total sum of squared deviations from the mean.
pub fn regression_cost(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Misclassification rate of the majority class.
pub fn classification_cost(codes: &[u32], n_classes: usize) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; n_classes];
    for &c in codes {
        counts[c as usize] += 1;
    }
    let majority = counts.iter().copied().max().unwrap_or(0);
    (codes.len() - majority) as f64 / codes.len() as f64
}

/// Cost of the node made of `rows`.
pub fn node_cost(target: TargetRef<'_>, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Dataset("cost of an empty node".into()));
    }
    Ok(match target {
        TargetRef::Regression(y) => regression_cost(&rows.iter().map(|&r| y[r]).collect::<Vec<_>>()),
        TargetRef::Classification { codes, n_classes } => {
            classification_cost(&rows.iter().map(|&r| codes[r]).collect::<Vec<_>>(), n_classes)
        }
    })
}

/// Gain of splitting `rows` on `feature` at `threshold`, evaluated directly
/// from the node costs of the two children.
pub fn split_gain(data: &Dataset, rows: &[usize], feature: usize, threshold: f64) -> Result<f64> {
    let x = data.column(feature);
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r] <= threshold);
    if left.is_empty() || right.is_empty() {
        return Err(Error::Dataset(format!(
            "threshold {threshold} on feature {feature} leaves an empty child"
        )));
    }
    let target = TargetRef::from(data.target());
    let n = rows.len() as f64;
    let parent = node_cost(target, rows)?;
    let weighted = left.len() as f64 / n * node_cost(target, &left)?
        + right.len() as f64 / n * node_cost(target, &right)?;
    Ok(parent - weighted)
}

/// Gain after penalization: unchanged for used features, otherwise scaled by
/// `lambda` or, with `depth_penalty`, by `lambda^depth`.
pub fn penalized_gain(
    raw_gain: f64,
    lambda: f64,
    in_used_set: bool,
    depth: usize,
    depth_penalty: bool,
) -> f64 {
    raw_gain * gain_multiplier(lambda, in_used_set, depth, depth_penalty)
}

#[inline]
fn gain_multiplier(lambda: f64, in_used_set: bool, depth: usize, depth_penalty: bool) -> f64 {
    if in_used_set {
        1.0
    } else if depth_penalty {
        lambda.powi(depth as i32)
    } else {
        lambda
    }
}

/// Features that have been split on anywhere in the ensemble so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsedSet {
    flags: Vec<bool>,
    len: usize,
}

impl UsedSet {
    pub fn new(n_features: usize) -> Self {
        Self {
            flags: vec![false; n_features],
            len: 0,
        }
    }

    #[inline]
    pub fn contains(&self, feature: usize) -> bool {
        self.flags[feature]
    }

    /// Returns true if the feature was not in the set before.
    pub fn insert(&mut self, feature: usize) -> bool {
        let fresh = !self.flags[feature];
        if fresh {
            self.flags[feature] = true;
            self.len += 1;
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_subset(&self, other: &UsedSet) -> bool {
        self.iter().all(|f| other.contains(f))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, &u)| u).map(|(i, _)| i)
    }
}

/// How raw gains are turned into the gains compared during split search.
#[derive(Debug, Clone, Copy)]
pub enum GainPenalty<'a> {
    /// Plain CART: penalized gain is the raw gain.
    Off,
    Regularized {
        lambdas: &'a [f64],
        used: &'a UsedSet,
        depth_penalty: bool,
    },
}

impl GainPenalty<'_> {
    #[inline]
    pub fn multiplier(&self, feature: usize, depth: usize) -> f64 {
        match *self {
            GainPenalty::Off => 1.0,
            GainPenalty::Regularized {
                lambdas,
                used,
                depth_penalty,
            } => gain_multiplier(lambdas[feature], used.contains(feature), depth, depth_penalty),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub raw_gain: f64,
    pub penalized_gain: f64,
}

/// Relative difference below which two gains count as tied.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

/// Does a split on `feature` with `penalized_gain` beat `best`? Gains within
/// [`GAIN_TIE_TOLERANCE`] of each other tie, and ties go to the lower index.
#[inline]
pub(crate) fn beats(penalized_gain: f64, feature: usize, best: &SplitCandidate) -> bool {
    let tol = GAIN_TIE_TOLERANCE * best.penalized_gain.abs();
    penalized_gain > best.penalized_gain + tol
        || (penalized_gain >= best.penalized_gain - tol && feature < best.feature)
}

/// Threshold between consecutive distinct sorted values `a < b`: their
/// midpoint, or `a` itself when the midpoint does not fall strictly below `b`.
#[inline]
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    if m < b && m.is_finite() {
        m
    } else {
        a
    }
}

/// Summary of the targets at a node, shared by every candidate feature.
#[derive(Debug, Clone)]
pub(crate) enum NodeStats {
    Regression {
        mean: f64,
        sum: f64,
        sum_sq: f64,
        cost: f64,
    },
    Classification {
        counts: Vec<usize>,
        majority: usize,
    },
}

impl NodeStats {
    /// Regression statistics are taken about the node mean.
    pub(crate) fn regression<I: Iterator<Item = f64> + Clone>(values: I) -> Self {
        let (n, total) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
        let mean = total / n as f64;
        let (sum, sum_sq) = values.fold((0.0, 0.0), |(s, q), v| {
            let c = v - mean;
            (s + c, q + c * c)
        });
        let cost = (sum_sq - sum * sum / n as f64).max(0.0);
        NodeStats::Regression {
            mean,
            sum,
            sum_sq,
            cost,
        }
    }

    pub(crate) fn classification<I: Iterator<Item = u32>>(codes: I, n_classes: usize) -> Self {
        let mut counts = vec![0usize; n_classes];
        for c in codes {
            counts[c as usize] += 1;
        }
        let majority = counts.iter().copied().max().unwrap_or(0);
        NodeStats::Classification { counts, majority }
    }

    /// Upper bound on the raw gain of any split of this node.
    pub(crate) fn max_gain(&self) -> f64 {
        match self {
            NodeStats::Regression { cost, .. } => *cost,
            NodeStats::Classification { counts, majority } => {
                let n: usize = counts.iter().sum();
                (n - majority) as f64 / n as f64
            }
        }
    }

    pub(crate) fn is_pure(&self, n: usize) -> bool {
        match self {
            NodeStats::Regression { cost, .. } => *cost <= 0.0,
            NodeStats::Classification { majority, .. } => *majority == n,
        }
    }
}

/// Best threshold of one feature, given the node's `(x, y)` pairs sorted by
/// `x`. Returns `(threshold, raw_gain, penalized_gain)` of the first
/// threshold attaining the largest penalized gain, if that gain is positive.
pub(crate) fn scan_regression(
    xs: &[f64],
    ys: &[f64],
    stats: &NodeStats,
    multiplier: f64,
) -> Option<(f64, f64, f64)> {
    let NodeStats::Regression {
        mean,
        sum,
        sum_sq,
        cost,
    } = *stats
    else {
        unreachable!("regression scan on classification stats")
    };
    let n = xs.len();
    let nf = n as f64;
    // Children are compared through `n * weighted child cost`; the smallest
    // value wins and only a split that beats the parent counts.
    let bound = cost * nf;
    let tol = GAIN_TIE_TOLERANCE * bound;
    let mut best_k = None;
    let mut best_w = bound;
    let (mut sl, mut ql) = (0.0, 0.0);
    for k in 0..n.saturating_sub(1) {
        let c = ys[k] - mean;
        sl += c;
        ql += c * c;
        if xs[k] >= xs[k + 1] {
            continue;
        }
        let nl = (k + 1) as f64;
        let nr = nf - nl;
        let sr = sum - sl;
        let w = nl * ql - sl * sl + nr * (sum_sq - ql) - sr * sr;
        if w < best_w - tol {
            best_w = w;
            best_k = Some(k);
        }
    }
    let k = best_k?;
    let raw = cost - best_w.max(0.0) / nf;
    let pen = raw * multiplier;
    (pen > 0.0).then(|| (midpoint(xs[k], xs[k + 1]), raw, pen))
}

/// Classification counterpart of [`scan_regression`].
pub(crate) fn scan_classification(
    xs: &[f64],
    codes: &[u32],
    stats: &NodeStats,
    multiplier: f64,
    left: &mut Vec<usize>,
) -> Option<(f64, f64, f64)> {
    let NodeStats::Classification { counts, majority } = stats else {
        unreachable!("classification scan on regression stats")
    };
    let n = xs.len();
    let nf = n as f64;
    left.clear();
    left.resize(counts.len(), 0);
    let mut left_max = 0usize;
    let mut best: Option<(f64, f64, f64)> = None;
    let mut best_pen = 0.0;
    for k in 0..n.saturating_sub(1) {
        let c = codes[k] as usize;
        left[c] += 1;
        left_max = left_max.max(left[c]);
        if xs[k] >= xs[k + 1] {
            continue;
        }
        let right_max = counts
            .iter()
            .zip(left.iter())
            .map(|(t, l)| t - l)
            .max()
            .unwrap_or(0);
        let raw = (left_max + right_max).saturating_sub(*majority) as f64 / nf;
        let pen = raw * multiplier;
        if pen > best_pen {
            best_pen = pen;
            best = Some((midpoint(xs[k], xs[k + 1]), raw, pen));
        }
    }
    best
}

/// Exhaustive search over every candidate feature and every midpoint between
/// consecutive distinct in-node values. Ties go to the lower feature index,
/// then to the smaller threshold. Returns `None` when no split has a
/// positive penalized gain.
pub fn best_split(
    data: &Dataset,
    rows: &[usize],
    candidates: &[usize],
    penalty: &GainPenalty<'_>,
    depth: usize,
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let target = TargetRef::from(data.target());
    let stats = match target {
        TargetRef::Regression(y) => NodeStats::regression(rows.iter().map(|&r| y[r])),
        TargetRef::Classification { codes, n_classes } => {
            NodeStats::classification(rows.iter().map(|&r| codes[r]), n_classes)
        }
    };
    if stats.is_pure(rows.len()) {
        return None;
    }
    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut order: Vec<usize> = Vec::with_capacity(rows.len());
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    let mut codes = Vec::with_capacity(rows.len());
    let mut scratch = Vec::new();
    let mut best: Option<SplitCandidate> = None;
    for &f in &features {
        let x = data.column(f);
        order.clear();
        order.extend_from_slice(rows);
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        xs.clear();
        xs.extend(order.iter().map(|&r| x[r]));
        let multiplier = penalty.multiplier(f, depth);
        let found = match target {
            TargetRef::Regression(y) => {
                ys.clear();
                ys.extend(order.iter().map(|&r| y[r]));
                scan_regression(&xs, &ys, &stats, multiplier)
            }
            TargetRef::Classification { codes: c, .. } => {
                codes.clear();
                codes.extend(order.iter().map(|&r| c[r]));
                scan_classification(&xs, &codes, &stats, multiplier, &mut scratch)
            }
        };
        if let Some((threshold, raw_gain, penalized_gain)) = found {
            if best.map_or(true, |b| beats(penalized_gain, f, &b)) {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold,
                    raw_gain,
                    penalized_gain,
                });
            }
        }
    }
    best
}
