//! Sweeps over `replicate x mtry x lambda0 x gamma x g`.
//!
//! Replicate `r` with seed `s` simulates its data from `s` (or reuses the
//! loaded CSV), splits it with `derive_seed(s, SPLIT)`, trains every forest
//! with master seed `derive_seed(s, FOREST)` and, when a boosted source
//! needs it, one guide forest seeded from `s`. Cells are ordered replicate
//! first, then mtry, lambda0, gamma and g, each in list order.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metric_name, read_records, table2_metrics, test_metric, ExperimentRecord, RECORD_HEADER};
use crate::data::{load_csv, split_train_test, standardize_target, Dataset, Task};
use crate::ensemble::{selected_features, train_forest, ForestConfig};
use crate::error::{Error, Result};
use crate::penalty::{
    check_task, compute_lambdas, load_importances, GSource, GuideForest, ImportanceOrigin, PenaltySpec,
};
use crate::rng::{derive_seed, tags};
use crate::simulation::{simulate, GroundTruth, SimSpec, N_FEATURES};
use crate::tree::GrowConfig;

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "regforest-grid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Simulated data; the spec's seed is replaced by each replicate seed.
    Simulation(SimSpec),
    Csv {
        path: PathBuf,
        target: String,
        task: Task,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub source: DataSource,
    /// One seed per replicate.
    pub replicates: Vec<u64>,
    pub mtry: Vec<usize>,
    pub lambda0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub g: Vec<GSource>,
    pub ntree: usize,
    pub train_fraction: f64,
    /// Standardize a regression response with the training mean and sd.
    pub standardize: bool,
    pub bootstrap: bool,
    pub depth_penalty: bool,
    pub min_node_size: Option<usize>,
    pub max_depth: Option<usize>,
    pub guide: GuideForest,
    /// `feature,importance` file for the external boosted sources.
    pub importance_file: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Simulation(SimSpec::default()),
            replicates: vec![1],
            mtry: vec![15],
            lambda0: vec![1.0],
            gamma: vec![0.0],
            g: vec![GSource::Constant],
            ntree: 100,
            train_fraction: 0.8,
            standardize: true,
            bootstrap: true,
            depth_penalty: false,
            min_node_size: None,
            max_depth: None,
            guide: GuideForest::default(),
            importance_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    mtry: usize,
    lambda0: f64,
    gamma: f64,
    g: GSource,
}

impl GridConfig {
    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &mtry in &self.mtry {
            for &lambda0 in &self.lambda0 {
                for &gamma in &self.gamma {
                    for &g in &self.g {
                        cells.push(Cell {
                            mtry,
                            lambda0,
                            gamma,
                            g,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn n_records(&self) -> usize {
        self.replicates.len() * self.mtry.len() * self.lambda0.len() * self.gamma.len() * self.g.len()
    }

    fn needs(&self, origin: ImportanceOrigin) -> bool {
        self.g.iter().any(|g| g.importance_origin() == Some(origin))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("replicates", self.replicates.is_empty()),
            ("mtry", self.mtry.is_empty()),
            ("lambda0", self.lambda0.is_empty()),
            ("gamma", self.gamma.is_empty()),
            ("g", self.g.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid list `{name}` is empty")));
        }
        if self.ntree == 0 {
            return Err(Error::Config("ntree must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        for cell in self.cells() {
            PenaltySpec {
                lambda0: cell.lambda0,
                gamma: cell.gamma,
                g: cell.g,
                depth_penalty: self.depth_penalty,
            }
            .validate()?;
        }
        if self.needs(ImportanceOrigin::External) != self.importance_file.is_some() {
            return Err(Error::Config(
                "importance_file is required exactly when an external boosted source is listed".into(),
            ));
        }
        if self.guide.ntree == 0 {
            return Err(Error::Config("guide forest needs at least one tree".into()));
        }
        if let DataSource::Simulation(spec) = &self.source {
            spec.validate()?;
            self.validate_for(N_FEATURES, Task::Regression)?;
        }
        Ok(())
    }

    fn validate_for(&self, p: usize, task: Task) -> Result<()> {
        for &m in &self.mtry {
            self.grow_config(m, task).validate(p)?;
        }
        for g in &self.g {
            check_task(g, task)?;
        }
        Ok(())
    }

    fn grow_config(&self, mtry: usize, task: Task) -> GrowConfig {
        let mut grow = GrowConfig::new(mtry, task);
        if let Some(m) = self.min_node_size {
            grow.min_node_size = m;
        }
        grow.max_depth = self.max_depth;
        grow.depth_penalty = self.depth_penalty;
        grow
    }
}

/// Run-level metadata written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config: GridConfig,
    pub n_records: usize,
    pub complete: bool,
}

impl Manifest {
    fn new(config: &GridConfig, complete: bool) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            n_records: config.n_records(),
            complete,
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Where a grid writes `results.csv` and `manifest.json`, and how many cells
/// may train at once.
#[derive(Debug, Clone, Default)]
pub struct GridOutput {
    pub dir: Option<PathBuf>,
    /// Concurrent cells; 0 or 1 runs them one at a time.
    pub jobs: usize,
}

struct Replicate {
    train: Dataset,
    test: Dataset,
    truth: Option<GroundTruth>,
    forest_seed: u64,
    guide: Option<Vec<f64>>,
}

/// Run every cell of the grid and return the records in canonical order.
/// With an output directory, records are appended to the results file as
/// they finish and an interrupted run picks up after its last complete row.
pub fn run_grid(config: &GridConfig, output: &GridOutput) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let loaded = match &config.source {
        DataSource::Csv { path, target, task } => {
            let data = load_csv(path, target, *task)?;
            config.validate_for(data.n_features(), data.task())?;
            Some(data)
        }
        DataSource::Simulation(_) => None,
    };

    let cells = config.cells();
    let mut sink = match &output.dir {
        Some(dir) => Some(Sink::open(dir, config)?),
        None => None,
    };
    let mut records = sink.as_ref().map(|s| s.done.clone()).unwrap_or_default();
    if !records.is_empty() {
        log::info!(
            "resuming after {} of {} records",
            records.len(),
            config.n_records()
        );
    }

    let external = match &config.importance_file {
        Some(path) => {
            let names = match &loaded {
                Some(d) => d.feature_names().to_vec(),
                None => (0..N_FEATURES).map(crate::simulation::feature_name).collect(),
            };
            Some(load_importances(path, &names)?)
        }
        None => None,
    };

    let jobs = output.jobs.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    for (r, &seed) in config.replicates.iter().enumerate() {
        let first = r * cells.len();
        let pending: Vec<usize> = (0..cells.len()).filter(|c| first + c >= records.len()).collect();
        if pending.is_empty() {
            continue;
        }
        log::info!(
            "replicate {} of {} (seed {seed}): {} cells",
            r + 1,
            config.replicates.len(),
            pending.len()
        );
        let rep = prepare(config, loaded.as_ref(), seed)?;
        for chunk in pending.chunks(jobs) {
            let results: Vec<Result<ExperimentRecord>> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&c| evaluate(config, &rep, external.as_deref(), r, &cells[c]))
                    .collect()
            });
            for result in results {
                let record = result?;
                if let Some(sink) = sink.as_mut() {
                    sink.append(&record)?;
                }
                records.push(record);
            }
        }
    }
    if let Some(sink) = sink {
        sink.finish(config)?;
    }
    Ok(records)
}

fn prepare(config: &GridConfig, loaded: Option<&Dataset>, seed: u64) -> Result<Replicate> {
    let (data, truth) = match (&config.source, loaded) {
        (_, Some(d)) => (d.clone(), None),
        (DataSource::Simulation(spec), None) => {
            let (d, t) = simulate(&SimSpec { seed, ..*spec })?;
            (d, Some(t))
        }
        (DataSource::Csv { .. }, None) => unreachable!("csv data is loaded up front"),
    };
    let plan = split_train_test(
        data.n_rows(),
        config.train_fraction,
        derive_seed(seed, tags::SPLIT),
    )?;
    let (mut train, mut test) = plan.apply(&data)?;
    if config.standardize && data.task() == Task::Regression {
        (train, test, _) = standardize_target(&train, &test)?;
    }
    let guide = if config.needs(ImportanceOrigin::InternalForest) {
        Some(config.guide.importances(&train, seed)?)
    } else {
        None
    };
    Ok(Replicate {
        train,
        test,
        truth,
        forest_seed: derive_seed(seed, tags::FOREST),
        guide,
    })
}

fn evaluate(
    config: &GridConfig,
    rep: &Replicate,
    external: Option<&[f64]>,
    replicate: usize,
    cell: &Cell,
) -> Result<ExperimentRecord> {
    let spec = PenaltySpec {
        lambda0: cell.lambda0,
        gamma: cell.gamma,
        g: cell.g,
        depth_penalty: config.depth_penalty,
    };
    let importances = match cell.g.importance_origin() {
        Some(ImportanceOrigin::InternalForest) => rep.guide.as_deref(),
        Some(ImportanceOrigin::External) => external,
        None => None,
    };
    let lambdas = compute_lambdas(&spec, &rep.train, importances)?;
    let forest_config = ForestConfig {
        ntree: config.ntree,
        grow: config.grow_config(cell.mtry, rep.train.task()),
        bootstrap: config.bootstrap,
        master_seed: rep.forest_seed,
    };
    let forest = train_forest(&rep.train, &forest_config, &lambdas)?;
    let selected = selected_features(&forest);
    let pct = rep.truth.as_ref().map(|t| table2_metrics(&selected, t));
    Ok(ExperimentRecord {
        replicate,
        mtry: cell.mtry,
        lambda0: cell.lambda0,
        gamma: cell.gamma,
        g: cell.g.name(),
        metric_name: metric_name(rep.train.task()).into(),
        metric: test_metric(&forest, &rep.test)?,
        n_selected: selected.len(),
        pct_important: pct.map(|p| p.0),
        pct_correlated: pct.map(|p| p.1),
        selected_features: selected,
    })
}

/// Append-only results file plus manifest.
struct Sink {
    results: PathBuf,
    manifest: PathBuf,
    file: File,
    done: Vec<ExperimentRecord>,
}

impl Sink {
    fn open(dir: &Path, config: &GridConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let results = dir.join(RESULTS_FILE);
        let manifest = dir.join(MANIFEST_FILE);
        let done = if manifest.exists() && results.exists() {
            resume(&results, &manifest, config)?
        } else {
            if results.exists() {
                return Err(Error::Config(format!(
                    "{} exists without a manifest; refusing to overwrite it",
                    results.display()
                )));
            }
            let mut header = csv::Writer::from_writer(Vec::new());
            header.write_record(RECORD_HEADER)?;
            let bytes = header
                .into_inner()
                .map_err(|e| Error::Dataset(format!("csv buffer: {e}")))?;
            std::fs::write(&results, bytes).map_err(|e| Error::io(&results, e))?;
            Vec::new()
        };
        Manifest::new(config, false).write(&manifest)?;
        let file = OpenOptions::new()
            .append(true)
            .open(&results)
            .map_err(|e| Error::io(&results, e))?;
        Ok(Self {
            results,
            manifest,
            file,
            done,
        })
    }

    fn append(&mut self, record: &ExperimentRecord) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(record.to_fields())?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Dataset(format!("csv buffer: {e}")))?;
        self.file
            .write_all(&bytes)
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.results, e))
    }

    fn finish(self, config: &GridConfig) -> Result<()> {
        Manifest::new(config, true).write(&self.manifest)
    }
}

/// Keep the complete rows of an earlier run of the same grid, dropping a
/// partially written last line.
fn resume(results: &Path, manifest: &Path, config: &GridConfig) -> Result<Vec<ExperimentRecord>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let previous: Manifest = serde_json::from_str(&text)?;
    if previous.format != MANIFEST_FORMAT {
        return Err(Error::Config(format!(
            "{} is not a grid manifest",
            manifest.display()
        )));
    }
    if serde_json::to_value(&previous.config)? != serde_json::to_value(config)? {
        return Err(Error::Config(format!(
            "{} belongs to a different grid; use a fresh output directory",
            manifest.display()
        )));
    }
    let bytes = std::fs::read(results).map_err(|e| Error::io(results, e))?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let header_len = bytes
        .iter()
        .position(|&b| b == b'\n')
        .map_or(usize::MAX, |i| i + 1);
    if keep < header_len {
        return Err(Error::Config(format!("{} has no header row", results.display())));
    }
    if keep < bytes.len() {
        let f = OpenOptions::new()
            .write(true)
            .open(results)
            .map_err(|e| Error::io(results, e))?;
        f.set_len(keep as u64).map_err(|e| Error::io(results, e))?;
    }
    let done = read_records(results)?;
    let cells = config.cells();
    for (i, record) in done.iter().enumerate() {
        let ok = i < config.n_records() && {
            let cell = &cells[i % cells.len()];
            record.replicate == i / cells.len()
                && record.mtry == cell.mtry
                && record.lambda0 == cell.lambda0
                && record.gamma == cell.gamma
                && record.g == cell.g.name()
        };
        if !ok {
            return Err(Error::Config(format!(
                "row {} of {} does not match the grid",
                i + 2,
                results.display()
            )));
        }
    }
    Ok(done)
}
