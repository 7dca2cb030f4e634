//! Shared fixtures for the benchmarks.

use regforest::simulation::{simulate, SimSpec};
use regforest::{split_train_test, Dataset};

/// Training side of an 80/20 split of the simulated benchmark.
pub fn simulated_train(n: usize, seed: u64) -> Dataset {
    let (data, _) = simulate(&SimSpec {
        n,
        seed,
        ..SimSpec::default()
    })
    .expect("valid spec");
    let plan = split_train_test(n, 0.8, seed).expect("valid split");
    plan.apply(&data).expect("split applies").0
}
