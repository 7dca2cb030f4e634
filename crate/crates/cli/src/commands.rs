use std::path::{Path, PathBuf};

use anyhow::Context;
use regforest::data::write_lines;
use regforest::experiments::{
    rmse, run_grid, run_refit, write_records, DataSource, GridConfig, GridOutput, MtryRule, RefitConfig,
    RESULTS_FILE,
};
use regforest::penalty::{
    check_task, load_importances, GParams, GuideForest, ImportanceOrigin, DEFAULT_BINS,
};
use regforest::simulation::{simulate as simulate_data, CorrelatedTerm, TARGET_NAME};
use regforest::{
    compute_lambdas, forest_importance, load_csv, selected_features, train_forest, Dataset, Forest,
    ForestConfig, GSource, GroundTruth, GrowConfig, PenaltySpec, SimSpec, Task,
};
use serde_json::json;

use crate::invalid;
use crate::options::{
    DataOpts, GridArgs, PenaltyOpts, PredictArgs, RefitArgs, SelectArgs, SimOpts, SimulateArgs, TrainArgs,
    TrainOpts, TreeOpts, WeightOpts,
};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_NTREE: usize = 100;

fn require<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| invalid(format!("--{flag} is required")))
}

/// `path` with its extension replaced by `ext`.
fn beside(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn load_data(opts: &DataOpts) -> anyhow::Result<Dataset> {
    let path = require(opts.data.as_ref(), "data")?;
    let target = opts.target.as_deref().unwrap_or(TARGET_NAME);
    Ok(load_csv(path, target, opts.task.unwrap_or(Task::Regression))?)
}

fn g_params(w: &WeightOpts) -> GParams {
    let defaults = GParams::default();
    GParams {
        bins: w.bins.unwrap_or(DEFAULT_BINS),
        epsilon: w.epsilon.unwrap_or(defaults.epsilon),
        correlation: w.correlation.unwrap_or(defaults.correlation),
    }
}

fn guide(w: &WeightOpts) -> GuideForest {
    GuideForest {
        ntree: w.guide_ntree.unwrap_or(GuideForest::default().ntree),
        mtry: w.guide_mtry,
    }
}

fn correlated_term(name: Option<&str>) -> anyhow::Result<CorrelatedTerm> {
    match name.unwrap_or("literal") {
        "literal" => Ok(CorrelatedTerm::Literal),
        "columns" => Ok(CorrelatedTerm::Columns),
        other => Err(invalid(format!("unknown correlated-term `{other}`"))),
    }
}

fn sim_spec(opts: &SimOpts, seed: u64) -> anyhow::Result<SimSpec> {
    let d = SimSpec::default();
    Ok(SimSpec {
        n: opts.n.unwrap_or(d.n),
        seed,
        noise_sd: opts.noise_sd.unwrap_or(d.noise_sd),
        correlated_noise_sd: opts.correlated_noise_sd.unwrap_or(d.correlated_noise_sd),
        correlated_term: correlated_term(opts.correlated_term.as_deref())?,
    })
}

fn penalty_spec(p: &PenaltyOpts, tree: &TreeOpts, params: &GParams) -> anyhow::Result<PenaltySpec> {
    let depth_penalty = tree.depth_penalty.unwrap_or(false);
    if p.standard == Some(true) {
        if p.lambda0.is_some() || p.gamma.is_some() || p.g.is_some() {
            return Err(invalid(
                "--standard cannot be combined with --lambda0, --gamma or --g",
            ));
        }
        return Ok(PenaltySpec {
            depth_penalty,
            ..PenaltySpec::standard()
        });
    }
    let spec = PenaltySpec {
        lambda0: p.lambda0.unwrap_or(1.0),
        gamma: p.gamma.unwrap_or(0.0),
        g: GSource::parse(p.g.as_deref().unwrap_or("constant"), params)?,
        depth_penalty,
    };
    spec.validate()?;
    Ok(spec)
}

/// Importances for the boosted and combined sources, if `g` needs them.
fn importances(
    g: &GSource,
    gamma: f64,
    weights: &WeightOpts,
    data: &Dataset,
    seed: u64,
) -> anyhow::Result<Option<Vec<f64>>> {
    let external = g.importance_origin() == Some(ImportanceOrigin::External);
    match (&weights.importance_file, external) {
        (Some(path), true) => Ok(Some(load_importances(path, data.feature_names())?)),
        (None, true) => Err(invalid(format!(
            "--importance-file is required with --g {}",
            g.name()
        ))),
        (Some(_), false) => Err(invalid(format!(
            "--importance-file is only used by the external g sources, not `{}`",
            g.name()
        ))),
        (None, false) if g.importance_origin().is_some() && gamma > 0.0 => {
            Ok(Some(guide(weights).importances(data, seed)?))
        }
        (None, false) => Ok(None),
    }
}

fn mtry_rule(text: &str) -> anyhow::Result<MtryRule> {
    Ok(text.parse::<MtryRule>()?)
}

fn fit(opts: &TrainOpts, data: &Dataset) -> anyhow::Result<Forest> {
    let params = g_params(&opts.weights);
    let spec = penalty_spec(&opts.penalty, &opts.tree, &params)?;
    check_task(&spec.g, data.task())?;
    let seed = opts.seed.unwrap_or(DEFAULT_SEED);
    let p = data.n_features();
    let mtry = match mtry_rule(opts.mtry.as_deref().unwrap_or("sqrt"))? {
        MtryRule::Fixed(m) if m > p => {
            return Err(invalid(format!("--mtry {m} exceeds the {p} features")));
        }
        rule => rule.resolve(p),
    };
    let imp = importances(&spec.g, spec.gamma, &opts.weights, data, seed)?;
    let lambdas = compute_lambdas(&spec, data, imp.as_deref())?;
    let mut grow = GrowConfig::new(mtry, data.task());
    if let Some(m) = opts.tree.min_node_size {
        grow.min_node_size = m;
    }
    grow.max_depth = opts.tree.max_depth;
    grow.depth_penalty = spec.depth_penalty;
    let config = ForestConfig {
        ntree: opts.tree.ntree.unwrap_or(DEFAULT_NTREE),
        grow,
        bootstrap: opts.tree.bootstrap.unwrap_or(true),
        master_seed: seed,
    };
    log::info!(
        "training {} trees, mtry {mtry}, lambda0 {} gamma {} g {}",
        config.ntree,
        spec.lambda0,
        spec.gamma,
        spec.g.name()
    );
    Ok(train_forest(data, &config, &lambdas)?)
}

pub fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let out = require(args.out, "out")?;
    let spec = sim_spec(&args.sim, args.seed.unwrap_or(DEFAULT_SEED))?;
    let (data, truth) = simulate_data(&spec)?;
    data.write_csv(&out, TARGET_NAME)?;
    let truth_path = args.truth.unwrap_or_else(|| beside(&out, "truth.json"));
    truth.write_sidecar(&truth_path, &spec)?;
    println!(
        "wrote {} rows x {} features to {} and ground truth to {}",
        data.n_rows(),
        data.n_features(),
        out.display(),
        truth_path.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let out = require(args.out, "out")?;
    let data = load_data(&args.train.data)?;
    let forest = fit(&args.train, &data)?;
    forest.save(&out)?;
    let report = args.report.unwrap_or_else(|| beside(&out, "importance.csv"));
    let importance = forest_importance(&forest);
    let mut w = csv::Writer::from_path(&report).with_context(|| format!("writing {}", report.display()))?;
    w.write_record(["feature", "importance", "lambda", "selected"])?;
    for (i, name) in forest.feature_names.iter().enumerate() {
        w.write_record([
            name.clone(),
            importance[i].to_string(),
            forest.lambdas.as_slice()[i].to_string(),
            (importance[i] > 0.0).to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "model written to {}; {} of {} features selected",
        out.display(),
        selected_features(&forest).len(),
        forest.n_features()
    );
    Ok(())
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let model = require(args.model, "model")?;
    let path = require(args.data, "data")?;
    let out = require(args.out, "out")?;
    let forest = Forest::load(&model)?;

    let mut reader = csv::Reader::from_path(&path).map_err(|e| data_error(&path, 1, "", e.to_string()))?;
    let header = reader.headers()?.clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let columns: Vec<usize> = forest
        .feature_names
        .iter()
        .map(|name| {
            position(name)
                .ok_or_else(|| data_error(&path, 1, name, "model feature missing from header".into()))
        })
        .collect::<anyhow::Result<_>>()?;
    let target = match &args.target {
        Some(t) => {
            Some(position(t).ok_or_else(|| data_error(&path, 1, t, "target column not found".into()))?)
        }
        None => None,
    };

    let labels = forest.class_labels.clone().unwrap_or_default();
    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    let mut row = vec![0.0; columns.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for (slot, &c) in row.iter_mut().zip(&columns) {
            *slot = record[c]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    data_error(
                        &path,
                        line,
                        &header[c],
                        format!("`{}` is not a finite number", &record[c]),
                    )
                })?;
        }
        predictions.push(forest.predict_row(&row));
        if let Some(t) = target {
            truth.push(record[t].to_string());
        }
    }

    let text = |v: f64| match forest.task {
        Task::Regression => v.to_string(),
        Task::Classification => labels[v as usize].clone(),
    };
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(["prediction"])?;
    for &v in &predictions {
        w.write_record([text(v)])?;
    }
    w.flush()?;

    if target.is_some() {
        let metric = match forest.task {
            Task::Regression => {
                let y: Vec<f64> = truth
                    .iter()
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| data_error(&path, 0, args.target.as_deref().unwrap_or(""), e.to_string()))?;
                format!("rmse {}", rmse(&predictions, &y)?)
            }
            Task::Classification => {
                let wrong = predictions
                    .iter()
                    .zip(&truth)
                    .filter(|(&p, t)| text(p) != **t)
                    .count();
                format!("misclassification {}", wrong as f64 / truth.len().max(1) as f64)
            }
        };
        println!("{metric}");
    }
    Ok(())
}

fn data_error(path: &Path, row: u64, column: &str, message: String) -> anyhow::Error {
    regforest::Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    }
    .into()
}

pub fn select(args: SelectArgs) -> anyhow::Result<()> {
    let out = require(args.out, "out")?;
    let forest = match &args.model {
        Some(model) => Forest::load(model)?,
        None => fit(&args.train, &load_data(&args.train.data)?)?,
    };
    let names: Vec<&str> = selected_features(&forest)
        .into_iter()
        .map(|i| forest.feature_names[i].as_str())
        .collect();
    write_lines(&out, &names)?;
    println!("{} features written to {}", names.len(), out.display());
    Ok(())
}

pub fn grid(args: GridArgs) -> anyhow::Result<()> {
    let dir = require(args.out, "out")?;
    let source = match &args.data.data {
        Some(path) => {
            let s = &args.sim;
            if s.n.is_some()
                || s.noise_sd.is_some()
                || s.correlated_noise_sd.is_some()
                || s.correlated_term.is_some()
            {
                return Err(invalid("simulation settings cannot be combined with --data"));
            }
            DataSource::Csv {
                path: path.clone(),
                target: args.data.target.clone().unwrap_or_else(|| TARGET_NAME.into()),
                task: args.data.task.unwrap_or(Task::Regression),
            }
        }
        None => DataSource::Simulation(sim_spec(&args.sim, 0)?),
    };
    let params = g_params(&args.weights);
    let defaults = GridConfig::default();
    let g = match &args.g {
        Some(names) => names
            .iter()
            .map(|n| GSource::parse(n, &params))
            .collect::<regforest::Result<Vec<_>>>()?,
        None => defaults.g.clone(),
    };
    let config = GridConfig {
        source,
        replicates: args.replicates.unwrap_or(defaults.replicates),
        mtry: args.mtry.unwrap_or(defaults.mtry),
        lambda0: args.lambda0.unwrap_or(defaults.lambda0),
        gamma: args.gamma.unwrap_or(defaults.gamma),
        g,
        ntree: args.tree.ntree.unwrap_or(defaults.ntree),
        train_fraction: args.train_fraction.unwrap_or(defaults.train_fraction),
        standardize: args.standardize.unwrap_or(defaults.standardize),
        bootstrap: args.tree.bootstrap.unwrap_or(defaults.bootstrap),
        depth_penalty: args.tree.depth_penalty.unwrap_or(false),
        min_node_size: args.tree.min_node_size,
        max_depth: args.tree.max_depth,
        guide: guide(&args.weights),
        importance_file: args.weights.importance_file.clone(),
    };
    let records = run_grid(
        &config,
        &GridOutput {
            dir: Some(dir.clone()),
            jobs: args.jobs.unwrap_or(1),
        },
    )?;
    println!(
        "{} records in {}",
        records.len(),
        dir.join(RESULTS_FILE).display()
    );
    Ok(())
}

pub fn refit(args: RefitArgs) -> anyhow::Result<()> {
    let out = require(args.out, "out")?;
    let data = load_data(&args.data)?;
    let params = g_params(&args.weights);
    let defaults = RefitConfig::default();
    let mtry = match &args.mtry {
        Some(rules) => rules
            .iter()
            .map(|r| mtry_rule(r))
            .collect::<anyhow::Result<Vec<_>>>()?,
        None => defaults.mtry.clone(),
    };
    let config = RefitConfig {
        resamples: args.resamples.unwrap_or(defaults.resamples),
        train_fraction: args.train_fraction.unwrap_or(defaults.train_fraction),
        seed: args.seed.unwrap_or(defaults.seed),
        ntree: args.tree.ntree.unwrap_or(defaults.ntree),
        mtry,
        penalty: penalty_spec(&args.penalty, &args.tree, &params)?,
        bootstrap: args.tree.bootstrap.unwrap_or(defaults.bootstrap),
        standardize: args.standardize.unwrap_or(defaults.standardize),
        min_node_size: args.tree.min_node_size,
        max_depth: args.tree.max_depth,
        guide: guide(&args.weights),
        importance_file: args.weights.importance_file.clone(),
    };
    let truth: Option<GroundTruth> = match &args.truth {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| data_error(path, e.line() as u64, "", e.to_string()))?,
            )
        }
        None => None,
    };
    let (outcomes, summary) = run_refit(&data, &config, truth.as_ref())?;
    let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
    write_records(&out, &records)?;
    let summary_path = args.summary.unwrap_or_else(|| beside(&out, "summary.json"));
    let runs: Vec<_> = outcomes
        .iter()
        .map(|o| {
            json!({
                "resample": o.record.replicate,
                "mtry": o.record.mtry,
                "refit_mtry": o.refit_mtry,
                "degenerate": o.degenerate,
            })
        })
        .collect();
    let doc = json!({ "config": config, "summary": summary, "runs": runs });
    std::fs::write(&summary_path, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;
    println!(
        "mean {} {:.4} (sd {:.4}) over {} resamples; best resample {} at {:.4}; {:.1}% of features selected",
        summary.metric_name,
        summary.mean_metric,
        summary.sd_metric,
        summary.resamples.len(),
        summary.best.resample,
        summary.best.metric,
        100.0 * summary.mean_fraction_selected
    );
    Ok(())
}
