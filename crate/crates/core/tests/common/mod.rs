//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the crate's split or tree code.
#![allow(dead_code)]

use regforest::{Dataset, Stream, Target};

/// Target column in plain form.
#[derive(Clone, Debug)]
pub enum Ys {
    Real(Vec<f64>),
    Class(Vec<u32>, usize),
}

impl Ys {
    pub fn of(data: &Dataset) -> Self {
        match data.target() {
            Target::Regression(y) => Ys::Real(y.clone()),
            Target::Classification { codes, labels } => Ys::Class(codes.clone(), labels.len()),
        }
    }
}

/// Sum of squared deviations from the mean, two passes.
pub fn sse(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum()
}

pub fn class_counts(codes: &[u32], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &v in codes {
        c[v as usize] += 1;
    }
    c
}

/// Misclassification rate of the majority class.
pub fn error_rate(codes: &[u32], k: usize) -> f64 {
    let c = class_counts(codes, k);
    let max = *c.iter().max().unwrap();
    (codes.len() - max) as f64 / codes.len() as f64
}

pub fn cost(ys: &Ys, rows: &[usize]) -> f64 {
    match ys {
        Ys::Real(y) => sse(&rows.iter().map(|&r| y[r]).collect::<Vec<_>>()),
        Ys::Class(c, k) => error_rate(&rows.iter().map(|&r| c[r]).collect::<Vec<_>>(), *k),
    }
}

/// cost(D) - (|L|/|D| cost(L) + |R|/|D| cost(R)), evaluated from scratch.
pub fn gain(x: &[f64], ys: &Ys, rows: &[usize], t: f64) -> f64 {
    let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r] <= t).collect();
    let right: Vec<usize> = rows.iter().copied().filter(|&r| x[r] > t).collect();
    let n = rows.len() as f64;
    cost(ys, rows) - (left.len() as f64 / n * cost(ys, &left) + right.len() as f64 / n * cost(ys, &right))
}

/// Midpoints between consecutive distinct values of `x` over `rows`.
pub fn thresholds(x: &[f64], rows: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().map(|&r| x[r]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Best {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub penalized: f64,
}

const TIE: f64 = 1e-12;

/// Enumerate every (feature, threshold) pair in index then threshold order;
/// keep the first strictly larger penalized gain (relative tie tolerance
/// 1e-12). `multiplier[f]` scales the gain of feature `f`.
pub fn exhaustive_best(
    columns: &[Vec<f64>],
    ys: &Ys,
    rows: &[usize],
    features: &[usize],
    multiplier: &[f64],
) -> Option<Best> {
    let parent = cost(ys, rows);
    let mut best: Option<Best> = None;
    for &f in features {
        for t in thresholds(&columns[f], rows) {
            let g = gain(&columns[f], ys, rows, t);
            let pen = g * multiplier[f];
            let better = match best {
                None => pen > TIE * parent * multiplier[f],
                Some(b) => pen > b.penalized + TIE * b.penalized.abs(),
            };
            if better {
                best = Some(Best {
                    feature: f,
                    threshold: t,
                    gain: g,
                    penalized: pen,
                });
            }
        }
    }
    best
}

/// Reference CART tree.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

pub fn leaf_value(ys: &Ys, rows: &[usize]) -> f64 {
    match ys {
        Ys::Real(y) => rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64,
        Ys::Class(c, k) => {
            let counts = class_counts(&rows.iter().map(|&r| c[r]).collect::<Vec<_>>(), *k);
            let max = *counts.iter().max().unwrap();
            counts.iter().position(|&n| n == max).unwrap() as f64
        }
    }
}

fn pure(ys: &Ys, rows: &[usize]) -> bool {
    match ys {
        Ys::Real(y) => rows.iter().all(|&r| y[r] == y[rows[0]]),
        Ys::Class(c, _) => rows.iter().all(|&r| c[r] == c[rows[0]]),
    }
}

/// Grow the unpenalized tree over all features, recursing on row lists
/// that keep their original order.
pub fn oracle_tree(
    columns: &[Vec<f64>],
    ys: &Ys,
    rows: &[usize],
    min_node_size: usize,
    max_depth: Option<usize>,
    depth: usize,
) -> OracleNode {
    let value = leaf_value(ys, rows);
    if rows.len() < 2 * min_node_size || max_depth.is_some_and(|d| depth >= d) || pure(ys, rows) {
        return OracleNode::Leaf(value);
    }
    let all: Vec<usize> = (0..columns.len()).collect();
    let ones = vec![1.0; columns.len()];
    let Some(b) = exhaustive_best(columns, ys, rows, &all, &ones) else {
        return OracleNode::Leaf(value);
    };
    let x = &columns[b.feature];
    let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r] <= b.threshold).collect();
    let right: Vec<usize> = rows.iter().copied().filter(|&r| x[r] > b.threshold).collect();
    OracleNode::Split {
        feature: b.feature,
        threshold: b.threshold,
        left: Box::new(oracle_tree(
            columns,
            ys,
            &left,
            min_node_size,
            max_depth,
            depth + 1,
        )),
        right: Box::new(oracle_tree(
            columns,
            ys,
            &right,
            min_node_size,
            max_depth,
            depth + 1,
        )),
    }
}

/// Node-for-node comparison; returns a description of the first mismatch.
pub fn compare_tree(node: &regforest::tree::Node, oracle: &OracleNode, path: &str) -> Result<(), String> {
    match (&node.split, oracle) {
        (None, OracleNode::Leaf(v)) => {
            if node.prediction == *v {
                Ok(())
            } else {
                Err(format!("{path}: leaf {} vs oracle {v}", node.prediction))
            }
        }
        (
            Some(s),
            OracleNode::Split {
                feature,
                threshold,
                left,
                right,
            },
        ) => {
            if s.feature != *feature || s.threshold != *threshold {
                return Err(format!(
                    "{path}: split ({}, {}) vs oracle ({feature}, {threshold})",
                    s.feature, s.threshold
                ));
            }
            compare_tree(&s.left, left, &format!("{path}L"))?;
            compare_tree(&s.right, right, &format!("{path}R"))
        }
        (Some(s), OracleNode::Leaf(v)) => Err(format!(
            "{path}: split on {} at {} where oracle has leaf {v}",
            s.feature, s.threshold
        )),
        (
            None,
            OracleNode::Split {
                feature, threshold, ..
            },
        ) => Err(format!(
            "{path}: leaf where oracle splits on {feature} at {threshold}"
        )),
    }
}

/// Random regression data: continuous columns, with every third column
/// rounded to a few levels so that ties occur.
pub fn random_regression(rng: &mut Stream, n: usize, p: usize) -> Dataset {
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..n)
                .map(|_| {
                    let u = rng.uniform();
                    if j % 3 == 2 {
                        (u * 4.0).floor()
                    } else {
                        u
                    }
                })
                .collect()
        })
        .collect();
    let y = (0..n)
        .map(|i| 3.0 * columns[0][i] + rng.standard_normal())
        .collect();
    let names = (0..p).map(|j| format!("f{j}")).collect();
    Dataset::new(names, columns, Target::Regression(y)).unwrap()
}

pub fn random_classification(rng: &mut Stream, n: usize, p: usize, k: usize) -> Dataset {
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| (rng.uniform() * 10.0).floor()).collect())
        .collect();
    let mut codes: Vec<u32> = (0..n)
        .map(|i| {
            if rng.uniform() < 0.7 {
                ((columns[0][i] as usize * k) / 10) as u32
            } else {
                rng.below(k) as u32
            }
        })
        .collect();
    // Every label must occur.
    for (c, code) in codes.iter_mut().enumerate().take(k) {
        *code = c as u32;
    }
    let labels = (0..k).map(|c| format!("c{c}")).collect();
    let names = (0..p).map(|j| format!("f{j}")).collect();
    Dataset::new(names, columns, Target::Classification { codes, labels }).unwrap()
}

/// Plug-in mutual information (bits) by the textbook double sum.
pub fn plug_in_mi(table: &[Vec<u64>]) -> f64 {
    let n: f64 = table.iter().flatten().map(|&c| c as f64).sum();
    let px: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
    let py: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy / (px[i] * py[j])).log2();
            }
        }
    }
    mi
}

pub fn plug_in_entropy(counts: &[u64]) -> f64 {
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln() / std::f64::consts::LN_2
        })
        .sum()
}

pub fn random_table(rng: &mut Stream) -> Vec<Vec<u64>> {
    let rows = 2 + rng.below(4);
    let cols = 2 + rng.below(4);
    let mut t: Vec<Vec<u64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.below(12) as u64).collect())
        .collect();
    t[0][0] += 1;
    t
}
