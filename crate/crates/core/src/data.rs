//! Column-oriented datasets, CSV ingestion, train/test splits and target
//! standardization.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Response column. Class labels are stored as integer codes into `labels`.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Regression(Vec<f64>),
    Classification { codes: Vec<u32>, labels: Vec<String> },
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Regression(y) => y.len(),
            Target::Classification { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Target::Regression(_) => Task::Regression,
            Target::Classification { .. } => Task::Classification,
        }
    }

    fn subset(&self, rows: &[usize]) -> Target {
        match self {
            Target::Regression(y) => Target::Regression(rows.iter().map(|&r| y[r]).collect()),
            Target::Classification { codes, labels } => Target::Classification {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                labels: labels.clone(),
            },
        }
    }
}

/// An immutable numeric feature matrix stored column by column, with a
/// regression or classification target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target: Target,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, columns: Vec<Vec<f64>>, target: Target) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::Dataset("no rows".into()));
        }
        if feature_names.len() != columns.len() {
            return Err(Error::Dataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Dataset(format!("duplicate feature name `{name}`")));
            }
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Dataset(format!(
                    "column `{name}` has {} rows, target has {n}",
                    col.len()
                )));
            }
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!(
                    "column `{name}` holds non-finite value {v}"
                )));
            }
        }
        match &target {
            Target::Regression(y) => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Dataset("target holds non-finite values".into()));
                }
            }
            Target::Classification { codes, labels } => {
                if labels.len() < 2 {
                    return Err(Error::Dataset("classification needs at least 2 classes".into()));
                }
                let unique: HashSet<&String> = labels.iter().collect();
                if unique.len() != labels.len() {
                    return Err(Error::Dataset("duplicate class labels".into()));
                }
                if codes.iter().any(|&c| c as usize >= labels.len()) {
                    return Err(Error::Dataset("class code out of range".into()));
                }
            }
        }
        Ok(Self {
            feature_names,
            columns,
            target,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn task(&self) -> Task {
        self.target.task()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// Regression response, or `None` for classification data.
    pub fn response(&self) -> Option<&[f64]> {
        match &self.target {
            Target::Regression(y) => Some(y),
            Target::Classification { .. } => None,
        }
    }

    pub fn class_codes(&self) -> Option<&[u32]> {
        match &self.target {
            Target::Classification { codes, .. } => Some(codes),
            Target::Regression(_) => None,
        }
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        match &self.target {
            Target::Classification { labels, .. } => Some(labels),
            Target::Regression(_) => None,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels().map_or(0, <[String]>::len)
    }

    /// Target as reals: the response for regression, the class code otherwise.
    pub fn target_values(&self) -> Vec<f64> {
        match &self.target {
            Target::Regression(y) => y.clone(),
            Target::Classification { codes, .. } => codes.iter().map(|&c| f64::from(c)).collect(),
        }
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    /// Row-major copy of the feature matrix.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|r| self.row(r)).collect()
    }

    /// New dataset holding `rows` (in the given order, repeats allowed).
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        Dataset::new(self.feature_names.clone(), columns, self.target.subset(rows))
    }

    /// New dataset restricted to `features`, in the given order.
    pub fn select_features(&self, features: &[usize]) -> Result<Self> {
        Dataset::new(
            features.iter().map(|&f| self.feature_names[f].clone()).collect(),
            features.iter().map(|&f| self.columns[f].clone()).collect(),
            self.target.clone(),
        )
    }

    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Dataset::new(
            self.feature_names.clone(),
            self.columns.clone(),
            Target::Regression(y),
        )
    }

    /// Write as CSV: feature columns in order, then the target column.
    /// Reals use the shortest representation that parses back to the same
    /// bits, so [`load_csv`] reproduces the dataset exactly.
    pub fn write_csv(&self, path: &Path, target_name: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(target_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.n_rows() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[r].to_string()));
            record.push(match &self.target {
                Target::Regression(y) => y[r].to_string(),
                Target::Classification { codes, labels } => labels[codes[r] as usize].clone(),
            });
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Load a headed CSV. Every column except `target_name` becomes a feature in
/// header order. Classification labels are coded by first appearance.
pub fn load_csv(path: &Path, target_name: &str, task: Task) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |row: u64, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_err(1, "", "empty file".into()));
    }
    let mut seen = HashSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(parse_err(1, name, "duplicate header name".into()));
        }
    }
    let target_col = header
        .iter()
        .position(|h| h == target_name)
        .ok_or_else(|| parse_err(1, target_name, "target column not found".into()))?;

    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); feature_names.len()];
    let mut response = Vec::new();
    let mut codes = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, u32> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            parse_err(row, "", e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let mut feature = 0;
        for (i, cell) in record.iter().enumerate() {
            if i == target_col {
                match task {
                    Task::Regression => response.push(parse_real(cell).ok_or_else(|| {
                        parse_err(row, &header[i], format!("`{cell}` is not a finite number"))
                    })?),
                    Task::Classification => {
                        if cell.is_empty() {
                            return Err(parse_err(row, &header[i], "missing class label".into()));
                        }
                        let code = *label_index.entry(cell.to_string()).or_insert_with(|| {
                            labels.push(cell.to_string());
                            (labels.len() - 1) as u32
                        });
                        codes.push(code);
                    }
                }
            } else {
                let v = parse_real(cell)
                    .ok_or_else(|| parse_err(row, &header[i], format!("`{cell}` is not a finite number")))?;
                columns[feature].push(v);
                feature += 1;
            }
        }
    }

    let target = match task {
        Task::Regression => Target::Regression(response),
        Task::Classification => {
            if !codes.is_empty() && labels.len() < 2 {
                return Err(Error::Dataset(format!(
                    "{}: classification target `{target_name}` has a single class",
                    path.display()
                )));
            }
            Target::Classification { codes, labels }
        }
    };
    if target.is_empty() {
        return Err(parse_err(2, "", "no data rows".into()));
    }
    Dataset::new(feature_names, columns, target)
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Disjoint train/test row sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffle `0..n` with `Stream::new(seed)` and put the first
/// `round(train_fraction * n)` rows in train. Both sides are returned in
/// ascending row order.
pub fn split_train_test(n: usize, train_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(seed).shuffle(&mut order);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, test, seed })
}

impl SplitPlan {
    pub fn apply(&self, data: &Dataset) -> Result<(Dataset, Dataset)> {
        Ok((data.subset_rows(&self.train)?, data.subset_rows(&self.test)?))
    }
}

/// Mean and sample standard deviation of the training response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }
}

/// Centre and scale both responses with the training mean and sample
/// standard deviation.
pub fn standardize_target(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardization)> {
    let (Some(y), Some(y_test)) = (train.response(), test.response()) else {
        return Err(Error::Config("standardization needs a regression target".into()));
    };
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = if y.len() > 1 {
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::Dataset("training target has zero variance".into()));
    }
    let t = Standardization { mean, sd };
    let train = train.with_response(y.iter().map(|&v| t.apply(v)).collect())?;
    let test = test.with_response(y_test.iter().map(|&v| t.apply(v)).collect())?;
    Ok((train, test, t))
}

/// Write one value per line; used for selected-feature lists and the like.
pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut file = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for line in lines {
        writeln!(file, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn regression(y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(
            vec!["a".into()],
            vec![(0..n).map(|i| i as f64).collect()],
            Target::Regression(y),
        )
        .unwrap()
    }

    #[test]
    fn loads_regression_csv() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), "y", Task::Regression).unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.feature_names(), ["a", "b"]);
        assert_eq!(d.column(1), [2.0, 5.0, 8.0]);
        assert_eq!(d.response().unwrap(), [3.0, 6.0, 9.0]);
    }

    #[test]
    fn target_column_can_sit_anywhere() {
        let f = write_tmp("y,a,b\n3,1,2\n");
        let d = load_csv(f.path(), "y", Task::Regression).unwrap();
        assert_eq!(d.feature_names(), ["a", "b"]);
        assert_eq!(d.row(0), [1.0, 2.0]);
    }

    #[test]
    fn encodes_labels_by_first_appearance() {
        let f = write_tmp("a,y\n1,A\n2,B\n3,A\n");
        let d = load_csv(f.path(), "y", Task::Classification).unwrap();
        assert_eq!(d.class_labels().unwrap(), ["A", "B"]);
        assert_eq!(d.class_codes().unwrap(), [0, 1, 0]);
    }

    #[test]
    fn reports_bad_cell_location() {
        let f = write_tmp("a,b,y\n1,abc,3\n4,5,6\n");
        let err = load_csv(f.path(), "y", Task::Regression).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_values_and_bad_headers() {
        let f = write_tmp("a,b,y\n1,,3\n");
        assert!(matches!(
            load_csv(f.path(), "y", Task::Regression),
            Err(Error::Parse { row: 2, .. })
        ));
        let f = write_tmp("a,b,y\n1,2,3\n");
        assert!(matches!(
            load_csv(f.path(), "z", Task::Regression),
            Err(Error::Parse { .. })
        ));
        let f = write_tmp("a,a,y\n1,2,3\n");
        assert!(matches!(
            load_csv(f.path(), "y", Task::Regression),
            Err(Error::Parse { row: 1, .. })
        ));
        let f = write_tmp("");
        assert!(load_csv(f.path(), "y", Task::Regression).is_err());
        let f = write_tmp("a,y\n");
        assert!(load_csv(f.path(), "y", Task::Regression).is_err());
        let f = write_tmp("a,y\n1,A\n2,A\n");
        assert!(load_csv(f.path(), "y", Task::Classification).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::new(
            vec!["x1".into(), "x2".into()],
            vec![vec![0.1, 1.0 / 3.0, -2.5e-300], vec![f64::MAX, 7.0, 1e-7]],
            Target::Classification {
                codes: vec![1, 0, 1],
                labels: vec!["B".into(), "A".into()],
            },
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        d.write_csv(f.path(), "label").unwrap();
        let back = load_csv(f.path(), "label", Task::Classification).unwrap();
        // First-appearance coding renumbers labels, values stay bit-exact.
        assert_eq!(back.columns(), d.columns());
        let labels = back.class_labels().unwrap();
        let decoded: Vec<&str> = back
            .class_codes()
            .unwrap()
            .iter()
            .map(|&c| labels[c as usize].as_str())
            .collect();
        assert_eq!(decoded, ["A", "B", "A"]);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let plan = split_train_test(10, 0.8, 1).unwrap();
        assert_eq!(plan.train.len(), 8);
        assert_eq!(plan.test.len(), 2);
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let plan = split_train_test(2, 0.5, 4).unwrap();
        assert_eq!((plan.train.len(), plan.test.len()), (1, 1));

        assert_eq!(
            split_train_test(10, 0.8, 3).unwrap(),
            split_train_test(10, 0.8, 3).unwrap()
        );
        assert!(split_train_test(2, 0.1, 0).is_err());
        assert!(split_train_test(10, 1.0, 0).is_err());
    }

    #[test]
    fn split_inclusion_frequency() {
        let n = 20;
        let mut counts = vec![0usize; n];
        for seed in 0..1000 {
            for &r in &split_train_test(n, 0.7, seed).unwrap().train {
                counts[r] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / 1000.0;
            assert!((freq - 0.7).abs() <= 0.05, "{freq}");
        }
    }

    #[test]
    fn standardizes_with_training_moments() {
        let train = regression(vec![1.0, 2.0, 3.0]);
        let test = regression(vec![2.0]);
        let (tr, te, t) = standardize_target(&train, &test).unwrap();
        assert_eq!((t.mean, t.sd), (2.0, 1.0));
        assert_eq!(tr.response().unwrap(), [-1.0, 0.0, 1.0]);
        assert_eq!(te.response().unwrap(), [0.0]);

        let flat = regression(vec![5.0, 5.0]);
        assert!(standardize_target(&flat, &test).is_err());
    }
}
