use std::path::Path;

use regforest::experiments::{
    misclassification_rate, rmse, run_grid, run_refit, select_then_refit, table2_metrics, test_metric,
    DataSource, GridConfig, GridOutput, MtryRule, RefitConfig, RefitStage, MANIFEST_FILE, RESULTS_FILE,
};
use regforest::penalty::{GSource, ImportanceOrigin};
use regforest::rng::{derive_seed, tags};
use regforest::simulation::{simulate, SimSpec};
use regforest::{
    selected_features, split_train_test, standardize_target, train_forest, train_forest_unpenalized, Dataset,
    ForestConfig, GrowConfig, LambdaVector, PenaltySpec, Stream, Target, Task,
};

#[test]
fn independent_guesses_miss_half_the_time() {
    let mut rng = Stream::new(3);
    let n = 20_000;
    let truth: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let guesses: Vec<u32> = (0..n).map(|_| rng.below(2) as u32).collect();
    let mr = misclassification_rate(&guesses, &truth).unwrap();
    assert!((mr - 0.5).abs() < 0.02, "{mr}");
}

#[test]
fn mean_predictor_has_unit_rmse_on_standardized_target() {
    let mut rng = Stream::new(4);
    let y: Vec<f64> = (0..20_000).map(|_| 3.0 + 2.0 * rng.standard_normal()).collect();
    let data = Dataset::new(vec!["x".into()], vec![vec![0.0; y.len()]], Target::Regression(y)).unwrap();
    let plan = split_train_test(data.n_rows(), 0.5, 1).unwrap();
    let (train, test) = plan.apply(&data).unwrap();
    let (_, test, _) = standardize_target(&train, &test).unwrap();
    let y = test.response().unwrap();
    let r = rmse(&vec![0.0; y.len()], y).unwrap();
    assert!((r - 1.0).abs() < 0.02, "{r}");
}

fn table1_grid(replicates: Vec<u64>, mtry: Vec<usize>) -> GridConfig {
    GridConfig {
        replicates,
        mtry,
        ..GridConfig::default()
    }
}

#[test]
fn standard_forest_cells_select_every_feature() {
    let records = run_grid(&table1_grid(vec![1], vec![15, 45]), &GridOutput::default()).unwrap();
    assert_eq!(records.len(), 2);
    for r in &records {
        assert_eq!(r.n_selected, 250);
        assert_eq!(r.pct_important, Some(136.0 / 205.0));
        assert_eq!(r.pct_correlated, Some(1.0));
    }
}

fn small_grid() -> GridConfig {
    GridConfig {
        source: DataSource::Simulation(SimSpec {
            n: 150,
            ..SimSpec::default()
        }),
        replicates: vec![7, 8],
        mtry: vec![5, 30],
        lambda0: vec![0.2, 0.9],
        gamma: vec![0.0, 0.5],
        g: vec![
            GSource::Constant,
            GSource::Boosted {
                origin: ImportanceOrigin::InternalForest,
            },
        ],
        ntree: 10,
        guide: regforest::penalty::GuideForest {
            ntree: 20,
            mtry: None,
        },
        ..GridConfig::default()
    }
}

fn run_into(dir: &Path, config: &GridConfig, jobs: usize) -> Vec<u8> {
    run_grid(
        config,
        &GridOutput {
            dir: Some(dir.to_path_buf()),
            jobs,
        },
    )
    .unwrap();
    std::fs::read(dir.join(RESULTS_FILE)).unwrap()
}

#[test]
fn grid_output_is_deterministic_and_resumable() {
    let root = tempfile::tempdir().unwrap();
    let config = small_grid();
    let full = run_into(&root.path().join("a"), &config, 1);
    assert_eq!(full, run_into(&root.path().join("b"), &config, 1));
    assert_eq!(full, run_into(&root.path().join("c"), &config, 3));
    let text = String::from_utf8(full.clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + config.n_records());

    // Cut the file after 5 complete rows and half of the sixth, as a killed
    // run would leave it, and mark the manifest unfinished.
    let dir = root.path().join("b");
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut cut: String = lines[..6].concat();
    cut.push_str(&lines[6][..lines[6].len() / 2]);
    std::fs::write(dir.join(RESULTS_FILE), cut).unwrap();
    let manifest = std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("\"complete\": true"));
    std::fs::write(
        dir.join(MANIFEST_FILE),
        manifest.replace("\"complete\": true", "\"complete\": false"),
    )
    .unwrap();
    let resumed = run_grid(
        &config,
        &GridOutput {
            dir: Some(dir.clone()),
            jobs: 1,
        },
    )
    .unwrap();
    assert_eq!(std::fs::read(dir.join(RESULTS_FILE)).unwrap(), full);
    assert_eq!(resumed.len(), config.n_records());

    // A different grid must not reuse the directory.
    let other = GridConfig { ntree: 11, ..config };
    let err = run_grid(
        &other,
        &GridOutput {
            dir: Some(dir),
            jobs: 1,
        },
    )
    .unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn single_cell_grid_equals_hand_composition() {
    let config = GridConfig {
        source: DataSource::Simulation(SimSpec {
            n: 200,
            ..SimSpec::default()
        }),
        replicates: vec![42],
        mtry: vec![20],
        lambda0: vec![0.4],
        gamma: vec![0.0],
        ntree: 15,
        ..GridConfig::default()
    };
    let record = run_grid(&config, &GridOutput::default()).unwrap().remove(0);

    let (data, truth) = simulate(&SimSpec {
        n: 200,
        seed: 42,
        ..SimSpec::default()
    })
    .unwrap();
    let plan = split_train_test(200, 0.8, derive_seed(42, tags::SPLIT)).unwrap();
    let (train, test) = plan.apply(&data).unwrap();
    let (train, test, _) = standardize_target(&train, &test).unwrap();
    let forest_config = ForestConfig {
        ntree: 15,
        grow: GrowConfig::new(20, Task::Regression),
        bootstrap: true,
        master_seed: derive_seed(42, tags::FOREST),
    };
    let forest = train_forest(&train, &forest_config, &LambdaVector::uniform(250, 0.4)).unwrap();
    let selected = selected_features(&forest);
    let (imp, corr) = table2_metrics(&selected, &truth);
    assert_eq!(record.metric, test_metric(&forest, &test).unwrap());
    assert_eq!(record.selected_features, selected);
    assert_eq!(record.n_selected, selected.len());
    assert_eq!(record.pct_important, Some(imp));
    assert_eq!(record.pct_correlated, Some(corr));
}

#[test]
fn csv_grid_leaves_percentages_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    let mut rng = Stream::new(9);
    let mut text = String::from("a,b,label\n");
    for _ in 0..60 {
        let (a, b) = (rng.uniform(), rng.uniform());
        let label = if a > 0.5 { "yes" } else { "no" };
        text.push_str(&format!("{a},{b},{label}\n"));
    }
    std::fs::write(&path, text).unwrap();
    let config = GridConfig {
        source: DataSource::Csv {
            path,
            target: "label".into(),
            task: Task::Classification,
        },
        mtry: vec![1, 2],
        lambda0: vec![1.0, 0.5],
        g: vec![GSource::MutualInformation { bins: 10 }],
        gamma: vec![0.5],
        ntree: 10,
        ..GridConfig::default()
    };
    let records = run_grid(&config, &GridOutput::default()).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert_eq!(r.metric_name, "misclassification");
        assert!(r.pct_important.is_none() && r.pct_correlated.is_none());
        assert!(r.metric < 0.3, "{}", r.metric);
    }
    let bad = GridConfig {
        mtry: vec![3],
        ..config
    };
    assert!(run_grid(&bad, &GridOutput::default())
        .unwrap_err()
        .is_validation());
}

fn stage(penalty: PenaltySpec, mtry: MtryRule, seed: u64) -> RefitStage {
    RefitStage {
        penalty,
        mtry,
        ntree: 30,
        bootstrap: true,
        min_node_size: None,
        max_depth: None,
        seed,
    }
}

fn signal_data(seed: u64, n: usize, noise: f64) -> Dataset {
    let mut rng = Stream::new(seed);
    let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
    let y = (0..n)
        .map(|i| cols[3][i] + noise * rng.standard_normal())
        .collect();
    let names = (1..=5).map(|i| format!("x{i}")).collect();
    Dataset::new(names, cols, Target::Regression(y)).unwrap()
}

#[test]
fn unit_lambda_refit_is_the_standard_forest() {
    let data = signal_data(1, 200, 0.3);
    let plan = split_train_test(200, 0.75, 5).unwrap();
    let (train, test) = plan.apply(&data).unwrap();
    let s = stage(PenaltySpec::standard(), MtryRule::Fixed(2), 77);
    let out = select_then_refit(&train, &test, None, &s, None).unwrap();
    assert_eq!(out.record.n_selected, 5);
    assert_eq!(out.refit_mtry, 2);
    let config = ForestConfig {
        ntree: 30,
        grow: GrowConfig::new(2, Task::Regression),
        bootstrap: true,
        master_seed: 77,
    };
    let plain = train_forest_unpenalized(&train, &config).unwrap();
    assert_eq!(out.record.metric, test_metric(&plain, &test).unwrap());
}

#[test]
fn single_signal_refit_reaches_the_noise_floor() {
    let noise = 0.05;
    let data = signal_data(2, 400, noise);
    let plan = split_train_test(400, 0.75, 6).unwrap();
    let (train, test) = plan.apply(&data).unwrap();
    let penalty = PenaltySpec {
        lambda0: 0.1,
        ..PenaltySpec::standard()
    };
    let out = select_then_refit(&train, &test, None, &stage(penalty, MtryRule::Fixed(5), 3), None).unwrap();
    assert_eq!(out.record.selected_features, vec![3]);
    assert!(!out.degenerate);
    assert!(out.record.metric < 2.0 * noise, "rmse {}", out.record.metric);
}

#[test]
fn boosted_refit_keeps_accuracy_with_fewer_features() {
    let (data, truth) = simulate(&SimSpec::with_seed(3)).unwrap();
    let base = RefitConfig {
        resamples: 1,
        seed: 11,
        train_fraction: 0.8,
        ..RefitConfig::default()
    };
    let guided = RefitConfig {
        penalty: PenaltySpec {
            lambda0: 0.5,
            gamma: 0.5,
            g: GSource::Boosted {
                origin: ImportanceOrigin::InternalForest,
            },
            depth_penalty: false,
        },
        ..base.clone()
    };
    let (_, full) = run_refit(&data, &base, Some(&truth)).unwrap();
    let (outcomes, reg) = run_refit(&data, &guided, Some(&truth)).unwrap();
    assert_eq!(outcomes.len(), 5);
    assert_eq!(full.mean_fraction_selected, 1.0);
    assert!(reg.mean_fraction_selected < 0.5, "{}", reg.mean_fraction_selected);
    assert!(
        (reg.mean_metric - full.mean_metric).abs() <= 0.05,
        "{} vs {}",
        reg.mean_metric,
        full.mean_metric
    );
    assert_eq!(reg.best, reg.resamples[0]);
}
