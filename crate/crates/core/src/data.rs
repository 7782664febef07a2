//! Datasets, task streams, and hierarchical seeding.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A labelled feature matrix belonging to one task.
///
/// Features are stored row-major. Every row is finite and every label is
/// below `class_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    task_id: usize,
    class_count: usize,
}

impl TaskDataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        task_id: usize,
        class_count: usize,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidData(
                "at least one feature is required".into(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::InvalidData("at least one row is required".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::InvalidData(format!(
                "{} feature values do not form {} rows of {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if class_count < 2 {
            return Err(Error::InvalidData(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature value at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::InvalidData(format!(
                "label {label} at row {row} is not below class_count {class_count}"
            )));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            task_id,
            class_count,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<usize>,
        task_id: usize,
        class_count: usize,
    ) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::InvalidData("rows have differing lengths".into()));
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, n_features, labels, task_id, class_count)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidData(format!(
                    "row index {i} out of range for {} rows",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(
            features,
            self.n_features,
            labels,
            self.task_id,
            self.class_count,
        )
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn with_task_id(mut self, task_id: usize) -> Self {
        self.task_id = task_id;
        self
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidData("label vector length differs".into()));
        }
        Self::new(
            self.features.clone(),
            self.n_features,
            labels,
            self.task_id,
            self.class_count,
        )
    }

    pub fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        Self::new(
            features,
            self.n_features,
            self.labels.clone(),
            self.task_id,
            self.class_count,
        )
    }

    /// Appends the rows of `other` under this dataset's task id.
    ///
    /// The class count becomes the larger of the two.
    pub fn concat(&self, other: &TaskDataset) -> Result<Self> {
        if other.n_features != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: other.n_features,
            });
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(
            features,
            self.n_features,
            labels,
            self.task_id,
            self.class_count.max(other.class_count),
        )
    }

    /// Per-class row counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.class_count];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }
}

/// Train/test pair for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub train: TaskDataset,
    pub test: TaskDataset,
}

/// Tasks in arrival order, each with a held-out test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSequence {
    tasks: Vec<TaskSplit>,
}

impl TaskSequence {
    pub fn new(tasks: Vec<TaskSplit>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &tasks {
            if t.train.task_id() != t.test.task_id() {
                return Err(Error::TaskMismatch(format!(
                    "train task {} paired with test task {}",
                    t.train.task_id(),
                    t.test.task_id()
                )));
            }
            if t.train.n_features() != t.test.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: t.train.n_features(),
                    got: t.test.n_features(),
                });
            }
            if !seen.insert(t.train.task_id()) {
                return Err(Error::DuplicateTask(t.train.task_id()));
            }
        }
        Ok(Self { tasks })
    }

    /// Splits every task into train and test parts with `split_train_test`.
    pub fn from_tasks(
        tasks: Vec<TaskDataset>,
        test_fraction: f64,
        seed: &SeedStream,
    ) -> Result<Self> {
        let splits = tasks
            .into_iter()
            .map(|t| {
                let s = seed.child("split", t.task_id() as u64);
                split_train_test(&t, test_fraction, &s)
                    .map(|(train, test)| TaskSplit { train, test })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(splits)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[TaskSplit] {
        &self.tasks
    }
}

/// Deterministic source of random generators.
///
/// Children are derived from the parent seed and a `(label, index)` pair, so
/// the draws a component sees depend only on its position in the derivation
/// tree and never on thread scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        Self {
            seed: u64::from_le_bytes(bytes),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Randomly partitions `data` into train and test sets.
///
/// The test set holds `round(n * test_fraction)` rows. Both parts keep the
/// original relative row order.
pub fn split_train_test(
    data: &TaskDataset,
    test_fraction: f64,
    seed: &SeedStream,
) -> Result<(TaskDataset, TaskDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.len();
    let n_f = n as f64;
    if n_f * test_fraction < 1.0 || n_f * (1.0 - test_fraction) < 1.0 {
        return Err(Error::TooSmall(format!(
            "{n} rows cannot be split with test_fraction {test_fraction}"
        )));
    }
    let n_test = ((n_f * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((data.select(&train_idx)?, data.select(&test_idx)?))
}

/// Draws `round(fraction * n)` distinct rows; the rest form the out-of-bag set.
pub fn subsample_indices(
    n: usize,
    fraction: f64,
    seed: &SeedStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(fraction)?;
    let k = in_bag_size(n, fraction)?;
    let mut in_bag = index::sample(&mut seed.rng(), n, k).into_vec();
    in_bag.sort_unstable();
    let oob = complement(n, &in_bag);
    Ok((in_bag, oob))
}

/// Draws `round(fraction * n)` rows with replacement; rows never drawn are
/// out-of-bag.
///
/// The in-bag list is sorted and may contain repeats.
pub fn bootstrap_indices(
    n: usize,
    fraction: f64,
    seed: &SeedStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(fraction)?;
    let k = in_bag_size(n, fraction)?;
    let mut rng = seed.rng();
    let mut in_bag: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
    in_bag.sort_unstable();
    let oob = complement(n, &in_bag);
    if oob.is_empty() {
        return Err(Error::TooSmall(format!(
            "bootstrap of {k} draws from {n} rows left no out-of-bag rows"
        )));
    }
    Ok((in_bag, oob))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "sampling fraction must lie in (0, 1), got {fraction}"
        )))
    }
}

fn in_bag_size(n: usize, fraction: f64) -> Result<usize> {
    let k = (fraction * n as f64).round() as usize;
    if n < 2 || k == 0 || k >= n {
        return Err(Error::TooSmall(format!(
            "{n} rows at fraction {fraction} cannot give non-empty in-bag and out-of-bag sets"
        )));
    }
    Ok(k)
}

/// Rows of `0..n` absent from the sorted list `taken`.
fn complement(n: usize, taken: &[usize]) -> Vec<usize> {
    let mut used = vec![false; n];
    for &i in taken {
        used[i] = true;
    }
    (0..n).filter(|&i| !used[i]).collect()
}

const LABEL_COLUMN: &str = "label";
const TASK_COLUMN: &str = "task";

/// Reads the tabular task format: header `f0..f{p-1},label,task`.
///
/// Rows are grouped by task in order of first appearance. A task's class
/// count is one more than its largest label (at least 2).
pub fn read_tasks_csv(path: &Path) -> Result<Vec<TaskDataset>> {
    let file = std::fs::File::open(path)?;
    parse_tasks_csv(file, path)
}

pub(crate) fn parse_tasks_csv<R: Read>(reader: R, path: &Path) -> Result<Vec<TaskDataset>> {
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let label_col = find(LABEL_COLUMN)
        .ok_or_else(|| csv_err(1, format!("missing required column `{LABEL_COLUMN}`")))?;
    let task_col = find(TASK_COLUMN)
        .ok_or_else(|| csv_err(1, format!("missing required column `{TASK_COLUMN}`")))?;
    let mut feature_cols = Vec::new();
    for p in 0.. {
        match find(&format!("f{p}")) {
            Some(c) => feature_cols.push(c),
            None => break,
        }
    }
    if feature_cols.is_empty() {
        return Err(csv_err(1, "missing feature column `f0`".into()));
    }
    if headers.len() != feature_cols.len() + 2 {
        return Err(csv_err(
            1,
            format!(
                "expected columns f0..f{},label,task; found unexpected columns",
                feature_cols.len() - 1
            ),
        ));
    }

    struct Acc {
        features: Vec<f64>,
        labels: Vec<usize>,
    }
    let mut groups: BTreeMap<usize, Acc> = BTreeMap::new();
    let mut order = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_int = |col: usize, name: &str| -> Result<usize> {
            let raw = record.get(col).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(csv_err(line, format!("missing value in column `{name}`")));
            }
            raw.parse::<usize>().map_err(|_| {
                csv_err(
                    line,
                    format!("column `{name}` must be a non-negative integer, got `{raw}`"),
                )
            })
        };
        let label = parse_int(label_col, LABEL_COLUMN)?;
        let task = parse_int(task_col, TASK_COLUMN)?;
        let acc = groups.entry(task).or_insert_with(|| {
            order.push(task);
            Acc {
                features: Vec::new(),
                labels: Vec::new(),
            }
        });
        for (p, &col) in feature_cols.iter().enumerate() {
            let raw = record.get(col).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(csv_err(line, format!("missing value in column `f{p}`")));
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| csv_err(line, format!("column `f{p}` is not a number: `{raw}`")))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("non-finite value in column `f{p}`")));
            }
            acc.features.push(v);
        }
        acc.labels.push(label);
    }
    if order.is_empty() {
        return Err(csv_err(1, "file contains no data rows".into()));
    }
    let p = feature_cols.len();
    order
        .into_iter()
        .map(|task| {
            let acc = groups.remove(&task).expect("grouped task");
            let k = acc.labels.iter().max().map_or(2, |m| (m + 1).max(2));
            TaskDataset::new(acc.features, p, acc.labels, task, k)
        })
        .collect()
}

/// Reads a task CSV and splits each task into train and test sets.
pub fn ingest_csv(path: &Path, test_fraction: f64, seed: &SeedStream) -> Result<TaskSequence> {
    let tasks = read_tasks_csv(path)?;
    TaskSequence::from_tasks(tasks, test_fraction, seed)
}

/// Writes datasets in the tabular task format. All datasets must share a
/// feature dimension.
pub fn write_tasks_csv<W: Write>(writer: W, tasks: &[&TaskDataset]) -> Result<()> {
    let p = tasks.first().map_or(0, |t| t.n_features());
    if tasks.iter().any(|t| t.n_features() != p) {
        return Err(Error::InvalidData(
            "datasets written to one file must share a feature dimension".into(),
        ));
    }
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<String> = (0..p).map(|i| format!("f{i}")).collect();
    header.push(LABEL_COLUMN.into());
    header.push(TASK_COLUMN.into());
    wtr.write_record(&header).map_err(csv_io)?;
    for t in tasks {
        for (row, &label) in t.rows().zip(t.labels()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            rec.push(t.task_id().to_string());
            wtr.write_record(&rec).map_err(csv_io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> TaskDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        TaskDataset::from_rows(&rows, labels, 0, 2).unwrap()
    }

    #[test]
    fn rejects_bad_datasets() {
        assert!(TaskDataset::new(vec![1.0], 1, vec![2], 0, 2).is_err());
        assert!(TaskDataset::new(vec![f64::NAN], 1, vec![0], 0, 2).is_err());
        assert!(TaskDataset::new(vec![], 1, vec![], 0, 2).is_err());
        assert!(TaskDataset::new(vec![1.0, 2.0], 1, vec![0], 0, 2).is_err());
        assert!(TaskDataset::new(vec![1.0], 1, vec![0], 0, 1).is_err());
    }

    #[test]
    fn split_sizes() {
        let s = SeedStream::new(3);
        let (tr, te) = split_train_test(&toy(100), 0.45, &s).unwrap();
        assert_eq!((tr.len(), te.len()), (55, 45));
        let (tr, te) = split_train_test(&toy(2), 0.5, &s).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
        assert!(split_train_test(&toy(1), 0.5, &s).is_err());
        assert!(split_train_test(&toy(10), 1.0, &s).is_err());
        assert!(split_train_test(&toy(10), 0.0, &s).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let s = SeedStream::new(11);
        let a = split_train_test(&toy(40), 0.3, &s).unwrap();
        let b = split_train_test(&toy(40), 0.3, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_sizes() {
        let s = SeedStream::new(1);
        let (ib, oob) = subsample_indices(100, 0.67, &s).unwrap();
        assert_eq!((ib.len(), oob.len()), (67, 33));
        let (ib, oob) = subsample_indices(3, 0.34, &s).unwrap();
        assert_eq!((ib.len(), oob.len()), (1, 2));
        assert!(subsample_indices(1, 0.5, &s).is_err());
        assert!(subsample_indices(10, 0.99, &s).is_err());
    }

    #[test]
    fn child_streams_differ_and_repeat() {
        let root = SeedStream::new(42);
        assert_eq!(root.child("tree", 3), root.child("tree", 3));
        assert_ne!(root.child("tree", 3), root.child("tree", 4));
        assert_ne!(root.child("tree", 3), root.child("rep", 3));
        assert_ne!(root.child("ab", 0), root.child("a", 0).child("b", 0));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let a = toy(4);
        let b = toy(3).with_task_id(7);
        let mut buf = Vec::new();
        write_tasks_csv(&mut buf, &[&a, &b]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f0,label,task\n"));
        let back = parse_tasks_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, vec![a, b]);

        let missing = "f0,f1,task\n1,2,0\n";
        let err = parse_tasks_csv(missing.as_bytes(), Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("`label`"), "{err}");

        let nonfinite = "f0,label,task\n1,0,0\ninf,1,0\n";
        let err = parse_tasks_csv(nonfinite.as_bytes(), Path::new("m")).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");

        let empty = "f0,label,task\n,0,0\n";
        assert!(parse_tasks_csv(empty.as_bytes(), Path::new("m")).is_err());
    }

    proptest! {
        #[test]
        fn subsample_partitions(n in 2usize..400, fraction in 0.01f64..0.99, seed: u64) {
            match subsample_indices(n, fraction, &SeedStream::new(seed)) {
                Ok((ib, oob)) => {
                    prop_assert_eq!(ib.len(), (fraction * n as f64).round() as usize);
                    let mut all: Vec<usize> = ib.iter().chain(&oob).copied().collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                    prop_assert!(!ib.is_empty() && !oob.is_empty());
                }
                Err(_) => {
                    let k = (fraction * n as f64).round() as usize;
                    prop_assert!(k == 0 || k >= n);
                }
            }
        }

        #[test]
        fn split_partitions(n in 2usize..300, tf in 0.01f64..0.99, seed: u64) {
            let data = toy(n);
            match split_train_test(&data, tf, &SeedStream::new(seed)) {
                Ok((tr, te)) => {
                    prop_assert_eq!(tr.len() + te.len(), n);
                    let want = n as f64 * tf;
                    prop_assert!((te.len() as f64 - want).abs() <= 1.0);
                    let mut all: Vec<f64> = tr.features().iter().chain(te.features()).copied().collect();
                    all.sort_by(f64::total_cmp);
                    prop_assert_eq!(all, data.features().to_vec());
                }
                Err(_) => prop_assert!((n as f64) * tf < 1.0 || (n as f64) * (1.0 - tf) < 1.0),
            }
        }
    }
}
