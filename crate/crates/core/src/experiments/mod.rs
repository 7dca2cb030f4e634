//! Metrics, result records, grid sweeps and the select-then-refit protocol.

mod grid;
mod refit;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::ensemble::Forest;
use crate::error::{Error, Result};
use crate::simulation::GroundTruth;

pub use grid::{run_grid, DataSource, GridConfig, GridOutput, Manifest, MANIFEST_FILE, RESULTS_FILE};
pub use refit::{
    run_refit, select_then_refit, MtryRule, RefitConfig, RefitOutcome, RefitStage, RefitSummary,
    ResampleSummary,
};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::Dataset(format!(
            "need equal nonzero lengths, got {a} predictions and {b} truths"
        )));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), truth.len())?;
    let sse: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Fraction of positions where the predicted class differs from the truth.
pub fn misclassification_rate(predictions: &[u32], truth: &[u32]) -> Result<f64> {
    check_lengths(predictions.len(), truth.len())?;
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// `(pct_important, pct_correlated)`: the share of non-correlated selected
/// features that are important, and the share of the correlated block that
/// was selected. An empty denominator gives 0.
pub fn table2_metrics(selected: &[usize], truth: &GroundTruth) -> (f64, f64) {
    let in_corr = selected.iter().filter(|f| truth.correlated.contains(f)).count();
    let in_imp = selected.iter().filter(|f| truth.important.contains(f)).count();
    let rest = selected.len() - in_corr;
    let pct_important = if rest == 0 {
        0.0
    } else {
        in_imp as f64 / rest as f64
    };
    let pct_correlated = if truth.correlated.is_empty() {
        0.0
    } else {
        in_corr as f64 / truth.correlated.len() as f64
    };
    (pct_important, pct_correlated)
}

/// Name of the test metric for a task.
pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "rmse",
        Task::Classification => "misclassification",
    }
}

/// Test-set RMSE or misclassification rate of `forest` on `test`.
pub fn test_metric(forest: &Forest, test: &Dataset) -> Result<f64> {
    let predictions = forest.predict_dataset(test)?;
    match test.task() {
        Task::Regression => rmse(&predictions, test.response().unwrap_or_default()),
        Task::Classification => {
            let codes: Vec<u32> = predictions.iter().map(|&p| p as u32).collect();
            misclassification_rate(&codes, test.class_codes().unwrap_or_default())
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub replicate: usize,
    pub mtry: usize,
    pub lambda0: f64,
    pub gamma: f64,
    pub g: String,
    pub metric_name: String,
    pub metric: f64,
    pub n_selected: usize,
    /// Absent when the data carries no ground truth.
    pub pct_important: Option<f64>,
    pub pct_correlated: Option<f64>,
    /// 0-based column indices, ascending.
    pub selected_features: Vec<usize>,
}

pub const RECORD_HEADER: [&str; 11] = [
    "replicate",
    "mtry",
    "lambda0",
    "gamma",
    "g",
    "metric_name",
    "metric",
    "n_selected",
    "pct_important",
    "pct_correlated",
    "selected_features",
];

impl ExperimentRecord {
    pub fn to_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.replicate.to_string(),
            self.mtry.to_string(),
            self.lambda0.to_string(),
            self.gamma.to_string(),
            self.g.clone(),
            self.metric_name.clone(),
            self.metric.to_string(),
            self.n_selected.to_string(),
            opt(self.pct_important),
            opt(self.pct_correlated),
            join_indices(&self.selected_features),
        ]
    }

    pub fn from_fields(fields: &csv::StringRecord) -> std::result::Result<Self, String> {
        if fields.len() != RECORD_HEADER.len() {
            return Err(format!(
                "expected {} fields, got {}",
                RECORD_HEADER.len(),
                fields.len()
            ));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} `{s}`"))
        }
        let opt = |s: &str, what: &str| -> std::result::Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        };
        let selected_features = if fields[10].is_empty() {
            Vec::new()
        } else {
            fields[10]
                .split(';')
                .map(|s| num(s, "feature index"))
                .collect::<std::result::Result<_, _>>()?
        };
        Ok(Self {
            replicate: num(&fields[0], "replicate")?,
            mtry: num(&fields[1], "mtry")?,
            lambda0: num(&fields[2], "lambda0")?,
            gamma: num(&fields[3], "gamma")?,
            g: fields[4].to_string(),
            metric_name: fields[5].to_string(),
            metric: num(&fields[6], "metric")?,
            n_selected: num(&fields[7], "n_selected")?,
            pct_important: opt(&fields[8], "pct_important")?,
            pct_correlated: opt(&fields[9], "pct_correlated")?,
            selected_features,
        })
    }
}

pub fn join_indices(indices: &[usize]) -> String {
    indices.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Serialize records to CSV bytes, header included.
pub fn records_to_csv(records: &[ExperimentRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record(r.to_fields())?;
    }
    w.into_inner()
        .map_err(|e| Error::Dataset(format!("csv buffer: {e}")))
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let bytes = records_to_csv(records)?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        out.push(
            ExperimentRecord::from_fields(&record).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: String::new(),
                message,
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[0.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn misclassification_examples() {
        assert_eq!(misclassification_rate(&[0, 1], &[0, 1]).unwrap(), 0.0);
        let r = misclassification_rate(&[0, 1, 1], &[0, 0, 1]).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        assert!(misclassification_rate(&[0], &[]).is_err());
    }

    #[test]
    fn table2_examples() {
        let truth = GroundTruth::default();
        // 3 important, 5 correlated, 2 neither.
        let mut s = vec![0, 1, 2, 205, 206, 207, 208, 209, 180, 190];
        s.sort_unstable();
        let (imp, corr) = table2_metrics(&s, &truth);
        assert!((imp - 3.0 / 5.0).abs() < 1e-15);
        assert!((corr - 5.0 / 45.0).abs() < 1e-15);
        assert_eq!(table2_metrics(&truth.important, &truth), (1.0, 0.0));
        assert_eq!(table2_metrics(&[], &truth), (0.0, 0.0));
        assert_eq!(table2_metrics(&[210], &truth), (0.0, 1.0 / 45.0));
    }

    #[test]
    fn records_round_trip_through_csv() {
        let records = vec![
            ExperimentRecord {
                replicate: 0,
                mtry: 15,
                lambda0: 0.1,
                gamma: 0.5,
                g: "boosted-rf".into(),
                metric_name: "rmse".into(),
                metric: 0.4712345678901234,
                n_selected: 3,
                pct_important: Some(2.0 / 3.0),
                pct_correlated: Some(0.0),
                selected_features: vec![0, 3, 4],
            },
            ExperimentRecord {
                replicate: 1,
                mtry: 2,
                lambda0: 1.0,
                gamma: 0.0,
                g: "constant".into(),
                metric_name: "misclassification".into(),
                metric: 0.25,
                n_selected: 0,
                pct_important: None,
                pct_correlated: None,
                selected_features: vec![],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&path, &records).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("replicate,mtry,lambda0,gamma,g,metric_name,metric,"));
        assert!(text.contains(",0;3;4\n"));
    }
}
