mod common;

use proptest::prelude::*;
use regforest::ensemble::train_forest_observed;
use regforest::penalty::{
    compute_lambdas, g_correlation, g_entropy, g_mutual_information, mix_lambda, CorrelationKind, GSource,
    LambdaVector, PenaltySpec, LAMBDA_FLOOR,
};
use regforest::split::{best_split, penalized_gain, split_gain, GainPenalty, UsedSet};
use regforest::tree::{grow_tree, GrowConfig, TreePenalty};
use regforest::{train_forest, Dataset, ForestConfig, Stream, Target, Task};

fn dataset(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let names = (0..columns.len()).map(|i| format!("f{i}")).collect();
    Dataset::new(names, columns, Target::Regression(y)).unwrap()
}

/// 3 to 4 columns of `n` values on a coarse grid (so ties happen) plus y.
fn node_data() -> impl Strategy<Value = Dataset> {
    (4usize..25, 2usize..5).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..8, n), p),
            prop::collection::vec(-50.0f64..50.0, n),
        )
            .prop_map(|(cols, y)| {
                dataset(
                    cols.into_iter()
                        .map(|c| c.into_iter().map(f64::from).collect())
                        .collect(),
                    y,
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn regression_gain_is_non_negative(data in node_data()) {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        for f in 0..data.n_features() {
            for t in common::thresholds(data.column(f), &rows) {
                let g = split_gain(&data, &rows, f, t).unwrap();
                prop_assert!(g >= -1e-9, "gain {g}");
            }
        }
    }

    #[test]
    fn depth_mode_is_exponentiation(raw in 0.0f64..1e3, lambda in 1e-3f64..1.0, depth in 1usize..12) {
        let a = penalized_gain(raw, lambda, false, depth, true);
        let b = penalized_gain(raw, lambda.powi(depth as i32), false, 1, false);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        prop_assert_eq!(penalized_gain(raw, lambda, true, depth, true), raw);
    }

    #[test]
    fn unit_lambdas_reproduce_plain_search(data in node_data()) {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let features: Vec<usize> = (0..data.n_features()).collect();
        let ones = vec![1.0; data.n_features()];
        let used = UsedSet::new(data.n_features());
        let penalized = best_split(&data, &rows, &features, &GainPenalty::Regularized {
            lambdas: &ones, used: &used, depth_penalty: false,
        }, 1);
        let plain = best_split(&data, &rows, &features, &GainPenalty::Off, 1);
        prop_assert_eq!(penalized, plain);
    }

    #[test]
    fn common_lambda_scaling_keeps_the_argmax(data in node_data(), base in prop::collection::vec(0.1f64..1.0, 4), c in 0.05f64..1.0) {
        let p = data.n_features();
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let features: Vec<usize> = (0..p).collect();
        let used = UsedSet::new(p);
        let lambdas = &base[..p];
        let scaled: Vec<f64> = lambdas.iter().map(|l| l * c).collect();
        let pick = |l: &[f64]| best_split(&data, &rows, &features, &GainPenalty::Regularized {
            lambdas: l, used: &used, depth_penalty: false,
        }, 1).map(|s| (s.feature, s.threshold));
        prop_assert_eq!(pick(lambdas), pick(&scaled));
    }

    #[test]
    fn mixture_moves_toward_g(lambda0 in 0.0f64..1.0, g in 0.0f64..1.0, g1 in 0.0f64..0.99, dg in 0.001f64..0.01) {
        let g2 = g1 + dg;
        let a = mix_lambda(lambda0, g1, g);
        let b = mix_lambda(lambda0, g2, g);
        if g > lambda0 {
            prop_assert!(b > a);
        } else if g < lambda0 {
            prop_assert!(b < a);
        }
        let v = LambdaVector::new(vec![a, b]);
        prop_assert!(v.as_slice().iter().all(|&l| (LAMBDA_FLOOR..=1.0).contains(&l)));
    }

    #[test]
    fn lambdas_follow_the_closed_form(lambda0 in 0.0f64..1.0, gamma in 0.0f64..1.0, seed in 0u64..1000) {
        let mut rng = Stream::new(seed);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..30).map(|_| rng.uniform()).collect()).collect();
        let y: Vec<f64> = (0..30).map(|i| cols[0][i] + rng.uniform()).collect();
        let data = dataset(cols, y);
        let spec = PenaltySpec { lambda0, gamma, g: GSource::Correlation { method: CorrelationKind::Pearson }, depth_penalty: false };
        let g = g_correlation(&data, CorrelationKind::Pearson).unwrap();
        let lambdas = compute_lambdas(&spec, &data, None).unwrap();
        for (l, gi) in lambdas.as_slice().iter().zip(&g) {
            let want = ((1.0 - gamma) * lambda0 + gamma * gi).clamp(LAMBDA_FLOOR, 1.0);
            prop_assert!((l - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn g_sources_are_bounded_and_order_free(seed in 0u64..10_000, shift in 1usize..4) {
        let mut rng = Stream::new(seed);
        let n = 60;
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..n).map(|_| (rng.uniform() * (3 + j) as f64).floor()).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|i| cols[1][i] + rng.uniform()).collect();
        let data = dataset(cols.clone(), y.clone());
        let perm: Vec<usize> = (0..4).map(|j| (j + shift) % 4).collect();
        let permuted = dataset(perm.iter().map(|&j| cols[j].clone()).collect(), y);
        let sources: [fn(&Dataset) -> Vec<f64>; 3] = [
            |d| g_correlation(d, CorrelationKind::Kendall).unwrap(),
            |d| g_entropy(d, 10).unwrap(),
            |d| g_mutual_information(d, 10).unwrap(),
        ];
        for source in sources {
            let g = source(&data);
            let gp = source(&permuted);
            prop_assert!(g.iter().all(|v| (0.0..=1.0).contains(v)));
            for (k, &j) in perm.iter().enumerate() {
                prop_assert!((gp[k] - g[j]).abs() <= 1e-12);
            }
        }
        let mi = g_mutual_information(&data, 10).unwrap();
        prop_assert!(mi.iter().any(|&v| v == 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn leaves_partition_the_sample(data in node_data(), seed in 0u64..1000, mtry_frac in 0.0f64..1.0) {
        let p = data.n_features();
        let mtry = 1 + (mtry_frac * (p - 1) as f64) as usize;
        let n = data.n_rows();
        let mut rng = Stream::new(seed);
        let rows: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
        let config = GrowConfig { mtry, min_node_size: 1, max_depth: None, depth_penalty: false };
        let tree = grow_tree(&data, &rows, &config, TreePenalty::Off, &mut rng);
        prop_assert_eq!(tree.leaves().map(|l| l.samples).sum::<usize>(), rows.len());
        for node in tree.root.iter() {
            if let Some(s) = &node.split {
                prop_assert_eq!(s.left.samples + s.right.samples, node.samples);
                prop_assert!(s.left.samples > 0 && s.right.samples > 0);
            }
        }
        // Every sampled row lands in exactly one leaf.
        let mut counts = std::collections::HashMap::new();
        for &r in &rows {
            let leaf = tree.leaf_for(&data.row(r)) as *const _;
            *counts.entry(leaf).or_insert(0usize) += 1;
        }
        for leaf in tree.leaves() {
            prop_assert_eq!(counts.get(&(leaf as *const _)).copied().unwrap_or(0), leaf.samples);
        }
    }

    #[test]
    fn forests_are_deterministic_and_memory_only_grows(seed in 0u64..1000, lambda in 0.05f64..1.0) {
        let mut rng = Stream::new(seed);
        let data = common::random_regression(&mut rng, 40, 6);
        let config = ForestConfig {
            ntree: 8,
            grow: GrowConfig::new(2, Task::Regression),
            bootstrap: true,
            master_seed: seed,
        };
        let lambdas = LambdaVector::uniform(6, lambda);
        let a = train_forest(&data, &config, &lambdas).unwrap();
        let b = train_forest(&data, &config, &lambdas).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        let mut history: Vec<UsedSet> = Vec::new();
        let c = train_forest_observed(&data, &config, &lambdas, |_, used| history.push(used.clone())).unwrap();
        prop_assert_eq!(&c, &a);
        for w in history.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]));
        }
        // Tree k leaves its features in the memory seen by tree k + 1.
        for (k, tree) in a.trees.iter().enumerate() {
            for f in tree.used_features() {
                prop_assert!(history.get(k + 1).map_or(a.final_used_set.contains(&f), |h| h.contains(f)));
            }
        }
    }
}
