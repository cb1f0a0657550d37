//! Dataset ingestion and preparation.
//!
//! Raw UCI files are parsed into string records, encoded column by column
//! (numeric columns as-is, categorical columns as sorted integer codes),
//! median-imputed, min-max normalized over the whole dataset and zero-padded
//! on the right to a common width so a single network topology can move
//! between tasks. Splits are stratified 60/20/20 per class.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::task::Task;

/// Common input width, the largest native dimensionality among the tasks.
pub const D_COMMON: usize = 24;
pub const TRAIN_FRACTION: f64 = 0.6;
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Largest fraction of the training split an SES filter may remove.
pub const SES_MAX: f64 = 0.4;

const MISSING: &str = "?";

#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub task: Task,
    /// Attribute strings per record, class included.
    pub rows: Vec<Vec<String>>,
    pub class_column: usize,
}

impl RawDataset {
    pub fn feature_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    pub fn matches_canonical_count(&self) -> bool {
        self.rows.len() == self.task.instance_count()
    }
}

/// Read a UCI file for `task`. The class is the last column for all three tasks.
pub fn load_dataset(task: Task, path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(task, &text, path)
}

pub fn parse_dataset(task: Task, text: &str, path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let expected = task.column_count();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = if task.is_comma_separated() {
            line.split(',').map(|f| f.trim().to_string()).collect()
        } else {
            line.split_whitespace().map(str::to_string).collect()
        };
        if fields.len() != expected {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                row: lineno + 1,
                expected,
                found: fields.len(),
            });
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    Ok(RawDataset {
        task,
        rows,
        class_column: expected - 1,
    })
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    cols: usize,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::WidthMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, cols })
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.cols).copied()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// Disjoint train / validation / test index sets, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task: Task,
    features: FeatureMatrix,
    labels: Vec<u8>,
    split: Split,
    d_native: usize,
}

impl TaskDataset {
    /// Assemble a dataset from parts, checking shapes and split coverage.
    pub fn new(
        task: Task,
        features: FeatureMatrix,
        labels: Vec<u8>,
        split: Split,
        d_native: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::SizeMismatch(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n
            )));
        }
        if d_native > features.cols() {
            return Err(Error::DimensionTooSmall {
                d_common: features.cols(),
                native: d_native,
            });
        }
        let mut seen = vec![false; n];
        for &i in split.train.iter().chain(&split.validation).chain(&split.test) {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::SizeMismatch(format!("index {i} appears in two split sets")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::SizeMismatch("split does not cover every instance".into()));
        }
        Ok(Self {
            task,
            features,
            labels,
            split,
            d_native,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn d_native(&self) -> usize {
        self.d_native
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Instances per class, `[class 0, class 1]`.
    pub fn class_counts(&self, indices: &[usize]) -> [usize; 2] {
        let mut counts = [0; 2];
        for &i in indices {
            counts[usize::from(self.labels[i])] += 1;
        }
        counts
    }

    /// Persist as CSV with header `f0..f{D-1},label,split`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut split_of = vec![""; self.len()];
        for (name, set) in [
            ("train", &self.split.train),
            ("val", &self.split.validation),
            ("test", &self.split.test),
        ] {
            for &i in set {
                split_of[i] = name;
            }
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.width()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        header.push("split".into());
        w.write_record(&header)?;
        for (i, name) in split_of.iter().enumerate() {
            let mut record: Vec<String> =
                self.features.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.labels[i].to_string());
            record.push((*name).to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read back a file written by [`TaskDataset::write_csv`].
    pub fn read_csv(task: Task, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let width = header.len().saturating_sub(2);
        if header.get(width) != Some("label") || header.get(width + 1) != Some("split") {
            return Err(Error::parse(path, "header must end with `label,split`"));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut split = Split::default();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let row = (0..width)
                .map(|j| {
                    record[j]
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, format!("row {}: bad value", i + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
            labels.push(match &record[width] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(path, format!("bad label `{other}`"))),
            });
            match &record[width + 1] {
                "train" => split.train.push(i),
                "val" => split.validation.push(i),
                "test" => split.test.push(i),
                other => return Err(Error::parse(path, format!("bad split `{other}`"))),
            }
        }
        let features = FeatureMatrix::from_rows(&rows, width)?;
        TaskDataset::new(task, features, labels, split, task.native_dim().min(width))
    }
}

/// Encode every predictive column of `raw` as reals and impute missing values
/// with the column median. Returns one vector per column plus the 0/1 labels.
pub fn encode(raw: &RawDataset) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let width = raw.rows.first().map_or(0, Vec::len);
    let mut columns = Vec::with_capacity(width.saturating_sub(1));
    for j in (0..width).filter(|&j| j != raw.class_column) {
        let tokens: Vec<&str> = raw.rows.iter().map(|r| r[j].as_str()).collect();
        columns.push(encode_column(&tokens));
    }

    let class_tokens: Vec<&str> = raw.rows.iter().map(|r| r[raw.class_column].as_str()).collect();
    let codes = encode_column(&class_tokens);
    let distinct: BTreeSet<u64> = codes.iter().map(|c| c.to_bits()).collect();
    if distinct.len() != 2 {
        return Err(Error::NotBinary(distinct.len()));
    }
    let low = codes.iter().copied().fold(f64::INFINITY, f64::min);
    let labels = codes.iter().map(|&c| u8::from(c != low)).collect();
    Ok((columns, labels))
}

fn encode_column(tokens: &[&str]) -> Vec<f64> {
    let numeric = tokens
        .iter()
        .filter(|t| **t != MISSING)
        .all(|t| t.parse::<f64>().is_ok());
    let mut values: Vec<Option<f64>> = if numeric {
        tokens.iter().map(|t| t.parse::<f64>().ok()).collect()
    } else {
        let categories: BTreeSet<&str> = tokens.iter().copied().filter(|t| *t != MISSING).collect();
        let categories: Vec<&str> = categories.into_iter().collect();
        tokens
            .iter()
            .map(|t| categories.binary_search(t).ok().map(|code| code as f64))
            .collect()
    };
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    let fill = median(&mut present).unwrap_or(0.0);
    values.iter_mut().map(|v| v.unwrap_or(fill)).collect()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 0 {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Min-max scale each column to `[0, 1]`; constant columns become all zeros.
pub fn normalize_columns(columns: &mut [Vec<f64>]) {
    for col in columns {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        for v in col.iter_mut() {
            *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
        }
    }
}

/// Stratified 60/20/20 split: indices of each class are shuffled with a
/// seeded generator and cut by rounded fractions of the class size.
pub fn stratified_split(labels: &[u8], seed: u64) -> Split {
    let mut split = Split::default();
    for class in 0..=1u8 {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect();
        members.shuffle(&mut rng::derived_rng(seed, &[stream::SPLIT, u64::from(class)]));
        let n = members.len() as f64;
        let n_train = (n * TRAIN_FRACTION).round() as usize;
        let n_val = ((n * VALIDATION_FRACTION).round() as usize).min(members.len() - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.validation.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Encode, impute, normalize, pad to `d_common` and split with `seed`.
pub fn preprocess(raw: &RawDataset, d_common: usize, seed: u64) -> Result<TaskDataset> {
    let (mut columns, labels) = encode(raw)?;
    let d_native = columns.len();
    if d_common < d_native {
        return Err(Error::DimensionTooSmall {
            d_common,
            native: d_native,
        });
    }
    normalize_columns(&mut columns);
    let n = labels.len();
    let mut data = vec![0.0; n * d_common];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * d_common + j] = v;
        }
    }
    let features = FeatureMatrix {
        data,
        cols: d_common,
    };
    let split = stratified_split(&labels, seed);
    TaskDataset::new(raw.task, features, labels, split, d_native)
}

/// Load `task` from `data_dir` and preprocess it with the split seed derived
/// from `master_seed`, so every stage of a run sees the same split.
pub fn load_task(task: Task, data_dir: impl AsRef<Path>, master_seed: u64) -> Result<TaskDataset> {
    let raw = load_dataset(task, data_dir.as_ref().join(task.file_name()))?;
    preprocess(&raw, D_COMMON, split_seed(task, master_seed))
}

pub fn split_seed(task: Task, master_seed: u64) -> u64 {
    rng::derive_seed(master_seed, &[stream::SPLIT, task.index()])
}

/// Socio-economic-status filter: a random subset of the training split that
/// one individual (and its twin) never sees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SesFilter {
    pub fraction: f64,
    pub seed: u64,
    pub removed_indices: Vec<usize>,
}

impl SesFilter {
    /// Remove `round_half_even(fraction * |train|)` training indices, drawn
    /// uniformly without replacement.
    pub fn draw(data: &TaskDataset, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=SES_MAX).contains(&fraction) {
            return Err(Error::SesFraction(fraction));
        }
        let train = &data.split().train;
        let count = (fraction * train.len() as f64).round_ties_even() as usize;
        let mut rng = rng::rng_from(seed);
        let mut removed: Vec<usize> = rand::seq::index::sample(&mut rng, train.len(), count)
            .into_iter()
            .map(|k| train[k])
            .collect();
        removed.sort_unstable();
        Ok(Self {
            fraction,
            seed,
            removed_indices: removed,
        })
    }

    /// Draw the fraction uniformly from `[0, SES_MAX]` and then the subset.
    pub fn random(data: &TaskDataset, seed: u64) -> Self {
        let fraction = rng::rng_from(seed).gen_range(0.0..=SES_MAX);
        Self::draw(data, fraction, rng::derive_seed(seed, &[1])).expect("fraction within range")
    }

    pub fn none() -> Self {
        Self {
            fraction: 0.0,
            seed: 0,
            removed_indices: Vec::new(),
        }
    }
}

/// Training indices surviving `filter`. Validation and test are never touched.
pub fn apply_ses(data: &TaskDataset, filter: &SesFilter) -> Result<Vec<usize>> {
    let mut removed = vec![false; data.len()];
    for &i in &filter.removed_indices {
        if i >= data.len() || data.split().train.binary_search(&i).is_err() {
            return Err(Error::SesMismatch { index: i });
        }
        removed[i] = true;
    }
    Ok(data
        .split()
        .train
        .iter()
        .copied()
        .filter(|&i| !removed[i])
        .collect())
}

/// A separable two-class problem of `n` rows at width `D_COMMON`, split like
/// a real task. Class 1 iff the first two features sum past 1. Intended for
/// tests and benchmarks.
pub fn synthetic_dataset(task: Task, n: usize, seed: u64) -> Result<TaskDataset> {
    let mut rng = rng::rng_from(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![0.0; D_COMMON];
        for v in &mut row[..4] {
            *v = rng.gen::<f64>();
        }
        labels.push(u8::from(row[0] + row[1] > 1.0));
        rows.push(row);
    }
    let features = FeatureMatrix::from_rows(&rows, D_COMMON)?;
    let split = stratified_split(&labels, rng::derive_seed(seed, &[stream::SPLIT]));
    TaskDataset::new(task, features, labels, split, 4)
}
