//! Tree ensembles with generalized gain penalization.
//!
//! Trees are grown greedily on the literal cost-reduction gain. A feature
//! that no tree of the ensemble has used yet has its gain scaled by a
//! per-feature coefficient `lambda_i = (1 - gamma) * lambda0 + gamma * g(x_i)`,
//! which makes the forest prefer features it already relies on and so
//! performs feature selection while it trains.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod penalty;
pub mod rng;
pub mod simulation;
pub mod split;
pub mod tree;

pub use data::{load_csv, split_train_test, standardize_target, Dataset, SplitPlan, Target, Task};
pub use ensemble::{
    forest_importance, selected_features, train_forest, train_forest_unpenalized, Forest, ForestConfig,
};
pub use error::{Error, Result};
pub use penalty::{compute_lambdas, GSource, LambdaVector, PenaltySpec};
pub use rng::Stream;
pub use simulation::{simulate, GroundTruth, SimSpec};
pub use split::{best_split, GainPenalty, SplitCandidate, UsedSet};
pub use tree::{grow_tree, GrowConfig, Tree, TreePenalty};
