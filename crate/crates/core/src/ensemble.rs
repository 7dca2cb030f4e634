//! Bagging and random forests with an ensemble-wide used-feature memory.
//!
//! Tree `k` (0-based) draws everything from the stream
//! `derive_seed(master_seed, TREE_BASE + k)`: first its bootstrap sample (`n`
//! calls to `below(n)`), then its node-level feature draws. Penalized forests
//! grow trees strictly in index order because each tree starts from the used
//! set left by its predecessors. When every lambda is 1 the used set cannot
//! influence a split, so trees are grown concurrently and give the same
//! forest.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::penalty::LambdaVector;
use crate::rng::{tags, Stream};
use crate::split::UsedSet;
use crate::tree::{grow_tree_presorted, GrowConfig, Presort, Tree, TreePenalty};

pub const MODEL_FORMAT: &str = "regforest-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub ntree: usize,
    pub grow: GrowConfig,
    /// Sample `n` rows with replacement for each tree.
    pub bootstrap: bool,
    pub master_seed: u64,
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::Config("ntree must be at least 1".into()));
        }
        self.grow.validate(n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub task: Task,
    pub feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_labels: Option<Vec<String>>,
    pub config: ForestConfig,
    pub lambdas: LambdaVector,
    /// Every feature split on by any tree, ascending.
    pub final_used_set: Vec<usize>,
    pub trees: Vec<Tree>,
}

fn bootstrap_rows(n: usize, bootstrap: bool, rng: &mut Stream) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.below(n)).collect()
    } else {
        (0..n).collect()
    }
}

fn tree_stream(master_seed: u64, k: usize) -> Stream {
    Stream::derived(master_seed, tags::TREE_BASE + k as u64)
}

fn check_inputs(train: &Dataset, config: &ForestConfig) -> Result<()> {
    if train.n_rows() == 0 {
        return Err(Error::Dataset("empty training data".into()));
    }
    config.validate(train.n_features())
}

fn assemble(
    train: &Dataset,
    config: &ForestConfig,
    lambdas: LambdaVector,
    trees: Vec<Tree>,
    used: UsedSet,
) -> Forest {
    Forest {
        task: train.task(),
        feature_names: train.feature_names().to_vec(),
        class_labels: train.class_labels().map(<[String]>::to_vec),
        config: *config,
        lambdas,
        final_used_set: used.iter().collect(),
        trees,
    }
}

/// Train a forest whose split search penalizes features that are new to the
/// ensemble by their lambda.
pub fn train_forest(train: &Dataset, config: &ForestConfig, lambdas: &LambdaVector) -> Result<Forest> {
    if lambdas.is_inert() {
        check_inputs(train, config)?;
        if lambdas.len() != train.n_features() {
            return Err(Error::Config(format!(
                "{} lambdas for {} features",
                lambdas.len(),
                train.n_features()
            )));
        }
        return Ok(train_concurrently(train, config, Some(lambdas)));
    }
    train_forest_observed(train, config, lambdas, |_, _| {})
}

/// Sequential penalized training. `observe(k, used)` is called before tree
/// `k` is grown with the used set that tree will start from.
pub fn train_forest_observed(
    train: &Dataset,
    config: &ForestConfig,
    lambdas: &LambdaVector,
    mut observe: impl FnMut(usize, &UsedSet),
) -> Result<Forest> {
    check_inputs(train, config)?;
    let p = train.n_features();
    if lambdas.len() != p {
        return Err(Error::Config(format!(
            "{} lambdas for {p} features",
            lambdas.len()
        )));
    }
    let presort = Presort::new(train);
    let mut used = UsedSet::new(p);
    let mut trees = Vec::with_capacity(config.ntree);
    for k in 0..config.ntree {
        observe(k, &used);
        let mut rng = tree_stream(config.master_seed, k);
        let rows = bootstrap_rows(train.n_rows(), config.bootstrap, &mut rng);
        trees.push(grow_tree_presorted(
            train,
            &presort,
            &rows,
            &config.grow,
            TreePenalty::Regularized {
                lambdas: lambdas.as_slice(),
                used: &mut used,
            },
            &mut rng,
        ));
    }
    Ok(assemble(train, config, lambdas.clone(), trees, used))
}

/// Ordinary forest with the penalization machinery switched off. Its model
/// records every lambda as 1.
pub fn train_forest_unpenalized(train: &Dataset, config: &ForestConfig) -> Result<Forest> {
    check_inputs(train, config)?;
    Ok(train_concurrently(train, config, None))
}

/// Independent trees grown in parallel and assembled in index order. With
/// `lambdas` each tree runs the penalized search against its own used set,
/// which is harmless because all lambdas are 1.
fn train_concurrently(train: &Dataset, config: &ForestConfig, lambdas: Option<&LambdaVector>) -> Forest {
    let p = train.n_features();
    let presort = Presort::new(train);
    let trees: Vec<Tree> = (0..config.ntree)
        .into_par_iter()
        .map(|k| {
            let mut rng = tree_stream(config.master_seed, k);
            let rows = bootstrap_rows(train.n_rows(), config.bootstrap, &mut rng);
            let mut local = UsedSet::new(p);
            let penalty = match lambdas {
                Some(l) => TreePenalty::Regularized {
                    lambdas: l.as_slice(),
                    used: &mut local,
                },
                None => TreePenalty::Off,
            };
            grow_tree_presorted(train, &presort, &rows, &config.grow, penalty, &mut rng)
        })
        .collect();
    let mut used = UsedSet::new(p);
    for tree in &trees {
        for f in tree.used_features() {
            used.insert(f);
        }
    }
    let lambdas = lambdas.cloned().unwrap_or_else(|| LambdaVector::ones(p));
    assemble(train, config, lambdas, trees, used)
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.task {
            Task::Regression => {
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
            }
            Task::Classification => {
                let k = self.class_labels.as_ref().map_or(0, Vec::len);
                majority_vote(self.trees.iter().map(|t| t.predict_row(row) as usize), k) as f64
            }
        }
    }

    /// Predictions for row-major `rows`.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }

    /// Predict every row of `data`, matching its columns to the model's
    /// features by name.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let columns: Vec<&[f64]> = self
            .feature_names
            .iter()
            .map(|name| {
                data.feature_index(name)
                    .map(|i| data.column(i))
                    .ok_or_else(|| Error::Dataset(format!("model feature `{name}` missing from data")))
            })
            .collect::<Result<_>>()?;
        let mut row = vec![0.0; columns.len()];
        Ok((0..data.n_rows())
            .map(|r| {
                for (slot, col) in row.iter_mut().zip(&columns) {
                    *slot = col[r];
                }
                self.predict_row(&row)
            })
            .collect())
    }

    /// Versioned JSON model document.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'static str,
            version: u32,
            #[serde(flatten)]
            forest: &'a Forest,
        }
        serde_json::to_string(&Doc {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            forest: self,
        })
        .expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            #[serde(flatten)]
            forest: Forest,
        }
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let doc = Doc::deserialize(&mut de)?;
        de.end()?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.forest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Most frequent code; ties go to the lower code.
pub fn majority_vote(votes: impl Iterator<Item = usize>, n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for v in votes {
        if v >= counts.len() {
            counts.resize(v + 1, 0);
        }
        counts[v] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

/// Mean over trees of each feature's accumulated raw gain. Each feature's
/// per-tree totals are summed in ascending order, so the result does not
/// depend on how the trees are ordered.
pub fn forest_importance(forest: &Forest) -> Vec<f64> {
    let ntree = forest.trees.len() as f64;
    let mut column = Vec::with_capacity(forest.trees.len());
    (0..forest.n_features())
        .map(|f| {
            column.clear();
            column.extend(forest.trees.iter().map(|t| t.gain_totals[f]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / ntree
        })
        .collect()
}

/// Features with positive importance, ascending.
pub fn selected_features(forest: &Forest) -> Vec<usize> {
    forest_importance(forest)
        .iter()
        .enumerate()
        .filter(|(_, &imp)| imp > 0.0)
        .map(|(i, _)| i)
        .collect()
}
