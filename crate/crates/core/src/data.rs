//! Datasets, splits and synthetic generators.
//!
//! Labels are stored 0-based (`0..classes`); reports print them 1-based.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}, column {column}: missing value")]
    Missing { row: usize, column: usize },
    #[error("row {row}, column {column}: {value:?} is not a finite number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row} has {got} columns, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("label column {column} out of range for {columns} columns")]
    LabelColumn { column: usize, columns: usize },
    #[error("only one class present ({0:?}); classification needs at least two")]
    SingleClass(String),
    #[error("class {0} is missing from the training partition")]
    ClassMissingInTrain(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
    /// Original label text per class index, if loaded from a file.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::Empty);
        }
        if features.len() != labels.len() {
            return Err(DataError::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(DataError::InvalidArgument("rows have no features".into()));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(DataError::Ragged {
                    row: i,
                    expected: d,
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonNumeric {
                    row: i,
                    column: j,
                    value: row[j].to_string(),
                });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(DataError::InvalidArgument(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            classes,
            class_names: (1..=classes).map(|k| k.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features[0].len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Zero-based label column; `None` means the last column.
    pub label_column: Option<usize>,
    pub has_header: bool,
}

fn csv_records<R: Read>(reader: R, has_header: bool) -> Result<Vec<Vec<String>>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64, DataError> {
    if cell.is_empty() || cell == "?" {
        return Err(DataError::Missing { row, column });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumeric {
            row,
            column,
            value: cell.to_owned(),
        }),
    }
}

/// Reads a labeled CSV. Labels become class indices in order of first
/// appearance.
pub fn load_csv_reader<R: Read>(reader: R, name: &str, opts: CsvOptions) -> Result<Dataset, DataError> {
    let rows = csv_records(reader, opts.has_header)?;
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let columns = rows[0].len();
    let label_col = opts.label_column.unwrap_or(columns.saturating_sub(1));
    if label_col >= columns || columns < 2 {
        return Err(DataError::LabelColumn {
            column: label_col,
            columns,
        });
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns {
            return Err(DataError::Ragged {
                row: i,
                expected: columns,
                got: row.len(),
            });
        }
        let mut x = Vec::with_capacity(columns - 1);
        for (j, cell) in row.iter().enumerate() {
            if j != label_col {
                x.push(parse_cell(cell, i, j)?);
            }
        }
        let text = &row[label_col];
        if text.is_empty() {
            return Err(DataError::Missing { row: i, column: label_col });
        }
        let next = names.len();
        let label = *index.entry(text.clone()).or_insert_with(|| {
            names.push(text.clone());
            next
        });
        features.push(x);
        labels.push(label);
    }
    if names.len() < 2 {
        return Err(DataError::SingleClass(names[0].clone()));
    }
    let mut ds = Dataset::new(name, features, labels, names.len())?;
    ds.class_names = names;
    Ok(ds)
}

pub fn load_csv(path: &Path, opts: CsvOptions) -> Result<Dataset, DataError> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_csv_reader(std::fs::File::open(path)?, &name, opts)
}

/// Reads unlabeled numeric rows; an empty file gives no rows.
pub fn read_feature_rows<R: Read>(reader: R, has_header: bool) -> Result<Vec<Vec<f64>>, DataError> {
    let rows = csv_records(reader, has_header)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, c)| parse_cell(c, i, j)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

fn check_train_classes(train: &Dataset) -> Result<(), DataError> {
    match train.class_counts().iter().position(|&c| c == 0) {
        Some(k) => Err(DataError::ClassMissingInTrain(k)),
        None => Ok(()),
    }
}

/// Shuffled train/test partition. The training part gets
/// `round(train_fraction * n)` rows (per class when stratified).
pub fn split<R: Rng + ?Sized>(
    dataset: &Dataset,
    train_fraction: f64,
    stratify: bool,
    rng: &mut R,
) -> Result<Split, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = dataset.len();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if stratify {
        for k in 0..dataset.classes() {
            let mut idx: Vec<usize> = (0..n).filter(|&i| dataset.label(i) == k).collect();
            idx.shuffle(rng);
            let cut = (train_fraction * idx.len() as f64).round() as usize;
            train.extend_from_slice(&idx[..cut]);
            test.extend_from_slice(&idx[cut..]);
        }
        train.shuffle(rng);
        test.shuffle(rng);
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let cut = (train_fraction * n as f64).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(DataError::InvalidArgument(format!(
            "train fraction {train_fraction} leaves an empty partition of {n} rows"
        )));
    }
    let s = Split {
        train: dataset.subset(&train),
        test: dataset.subset(&test),
    };
    check_train_classes(&s.train)?;
    Ok(s)
}

/// `k` shuffled folds; fold sizes differ by at most one.
pub fn kfold<R: Rng + ?Sized>(dataset: &Dataset, k: usize, rng: &mut R) -> Result<Vec<Split>, DataError> {
    let n = dataset.len();
    if k < 2 || k > n {
        return Err(DataError::InvalidArgument(format!("k = {k} needs 2 <= k <= {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let test = &idx[start..start + size];
        let train: Vec<usize> = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        let s = Split {
            train: dataset.subset(&train),
            test: dataset.subset(test),
        };
        check_train_classes(&s.train)?;
        folds.push(s);
        start += size;
    }
    Ok(folds)
}

/// Per-feature min-max scaling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(data: &Dataset) -> Self {
        let d = data.features();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in data.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    /// Constant features map to 0; values outside the fitted range are not
    /// clipped.
    pub fn apply(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            let range = self.max[j] - self.min[j];
            *v = if range > 0.0 { (*v - self.min[j]) / range } else { 0.0 };
        }
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for row in &mut out.features {
            self.apply(row);
        }
        out
    }
}

/// Scales both partitions with the training partition's ranges.
pub fn normalize_minmax(split: &Split) -> (Split, MinMax) {
    let mm = MinMax::fit(&split.train);
    let s = Split {
        train: mm.transform(&split.train),
        test: mm.transform(&split.test),
    };
    (s, mm)
}

/// Gaussian blobs with unit spread. Class centers sit on a circle of radius
/// `separation` in the first two dimensions (on a line when `d == 1`), so a
/// large separation gives linearly separable classes.
pub fn make_blobs<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    c: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset, DataError> {
    if c < 2 || n < c || d == 0 {
        return Err(DataError::InvalidArgument(format!(
            "blobs need c >= 2, n >= c and d >= 1 (n={n}, d={d}, c={c})"
        )));
    }
    let centers: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            let mut v = vec![0.0; d];
            if d == 1 {
                v[0] = separation * k as f64;
            } else {
                let a = 2.0 * PI * k as f64 / c as f64;
                v[0] = separation * a.cos();
                v[1] = separation * a.sin();
            }
            v
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(rng);
    let features = labels
        .iter()
        .map(|&k| centers[k].iter().map(|&m| m + normal.sample(rng)).collect())
        .collect();
    Dataset::new("blobs", features, labels, c)
}

/// Two interleaving half circles with Gaussian noise of standard deviation
/// `noise`; the outer moon is class 0.
pub fn make_two_moons<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Result<Dataset, DataError> {
    if n < 2 || noise < 0.0 {
        return Err(DataError::InvalidArgument(format!("two moons need n >= 2 and noise >= 0 (n={n})")));
    }
    let outer = n / 2;
    let inner = n - outer;
    let normal = Normal::new(0.0, noise.max(0.0)).expect("valid deviation");
    let step = |i: usize, count: usize| if count > 1 { PI * i as f64 / (count - 1) as f64 } else { 0.0 };
    let mut points: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for i in 0..outer {
        let t = step(i, outer);
        points.push((vec![t.cos(), t.sin()], 0));
    }
    for i in 0..inner {
        let t = step(i, inner);
        points.push((vec![1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    points.shuffle(rng);
    let (mut features, labels): (Vec<Vec<f64>>, Vec<usize>) = points.into_iter().unzip();
    if noise > 0.0 {
        for row in &mut features {
            for v in row.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    Dataset::new("two_moons", features, labels, 2)
}
