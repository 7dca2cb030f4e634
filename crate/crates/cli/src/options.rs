//! Flag groups. Every field is optional so that a value left off the command
//! line can come from the `--config` file; defaults are applied afterwards.
//! Field names are the flag names and the config keys.

use std::path::PathBuf;

use clap::Args;
use regforest::penalty::CorrelationKind;
use regforest::Task;
use serde::{Deserialize, Serialize};

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataOpts {
    /// CSV file with a header row
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column [default: y]
    #[arg(long)]
    pub target: Option<String>,
    /// regression or classification [default: regression]
    #[arg(long)]
    pub task: Option<Task>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TreeOpts {
    /// Trees per forest [default: 100]
    #[arg(long)]
    pub ntree: Option<usize>,
    /// Bootstrap rows for each tree [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bootstrap: Option<bool>,
    /// Smallest node that may still split is twice this [default: 5 for regression, 1 for classification]
    #[arg(long)]
    pub min_node_size: Option<usize>,
    /// Depth at which nodes become leaves, root = 1 [default: unlimited]
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Penalize new features by lambda^depth [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub depth_penalty: Option<bool>,
}

/// Parameters of the feature-weight sources.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct WeightOpts {
    /// Equal-frequency bins for entropy and mutual information [default: 10]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Correlation threshold of the combined sources [default: 0.5]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// pearson, spearman or kendall [default: pearson]
    #[arg(long)]
    pub correlation: Option<CorrelationKind>,
    /// `feature,importance` CSV, required by the *-external sources
    #[arg(long)]
    pub importance_file: Option<PathBuf>,
    /// Trees in the guide forest of the *-rf sources [default: 500]
    #[arg(long)]
    pub guide_ntree: Option<usize>,
    /// Guide forest mtry [default: floor(sqrt(p))]
    #[arg(long)]
    pub guide_mtry: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PenaltyOpts {
    /// Baseline penalty in (0, 1] [default: 1]
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Weight of g against lambda0, in [0, 1) [default: 0]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// constant, correlation, entropy, mutual-information, boosted-rf,
    /// boosted-external, combined-rf or combined-external [default: constant]
    #[arg(long)]
    pub g: Option<String>,
    /// Plain random forest; same as lambda0 = 1, gamma = 0
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standard: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimOpts {
    /// Rows to simulate [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise sd of the response [default: 1]
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Noise sd of the correlated columns [default: 0.2]
    #[arg(long)]
    pub correlated_noise_sd: Option<f64>,
    /// literal or columns [default: literal]
    #[arg(long)]
    pub correlated_term: Option<String>,
}

/// Everything needed to train one forest.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainOpts {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub penalty: PenaltyOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: WeightOpts,
    /// Candidates per node: sqrt, a fraction like 0.3p, or a count [default: sqrt]
    #[arg(long)]
    pub mtry: Option<String>,
    /// Master seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimOpts,
    /// Simulation seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth JSON [default: <out> with extension .truth.json]
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    /// Model file to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-feature importance and lambda CSV [default: <out> with extension .importance.csv]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    /// Model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV holding at least the model's feature columns
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column; when present the test metric is printed
    #[arg(long)]
    pub target: Option<String>,
    /// Predictions CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SelectArgs {
    /// Model file; without it a forest is trained from the training flags
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    /// Selected feature names, one per line
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: WeightOpts,
    /// Replicate seeds [default: 1]
    #[arg(long, value_delimiter = ',')]
    pub replicates: Option<Vec<u64>>,
    /// mtry values [default: 15]
    #[arg(long, value_delimiter = ',')]
    pub mtry: Option<Vec<usize>>,
    /// lambda0 values [default: 1]
    #[arg(long, value_delimiter = ',')]
    pub lambda0: Option<Vec<f64>>,
    /// gamma values [default: 0]
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// g sources [default: constant]
    #[arg(long, value_delimiter = ',')]
    pub g: Option<Vec<String>>,
    /// Training share of each split [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Standardize a regression response on the training side [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Output directory for results.csv and manifest.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cells evaluated concurrently [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RefitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub penalty: PenaltyOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: WeightOpts,
    /// mtry rules [default: sqrt,0.15p,0.4p,0.75p,0.95p]
    #[arg(long, value_delimiter = ',')]
    pub mtry: Option<Vec<String>>,
    /// Random train/test splits [default: 50]
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Training share of each split [default: 2/3]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Standardize a regression response on the training side [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Master seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ground-truth JSON written by `simulate`; adds the percentage columns
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Results CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON [default: <out> with extension .summary.json]
    #[arg(long)]
    pub summary: Option<PathBuf>,
}
