//! Generalization error estimates and transfer efficiencies.
//!
//! Every efficiency is a ratio of mean errors over repetitions, so for a task
//! with mean errors `single`, `up_to` and `all`:
//! `te = single / all`, `fte = single / up_to`, `bte = up_to / all`.

use serde::{Deserialize, Serialize};

use crate::classifier::HonestForestClassifier;
use crate::data::{SeedStream, TaskDataset};
use crate::error::{Error, Result};
use crate::learner::OmniLearner;

/// A model that classifies inputs of a named task.
pub trait TaskClassifier {
    fn predict_task(&self, task_id: usize, x: &[f64]) -> Result<usize>;
}

impl TaskClassifier for OmniLearner {
    fn predict_task(&self, task_id: usize, x: &[f64]) -> Result<usize> {
        self.predict(task_id, x)
    }
}

/// Task-unaware: the id is ignored.
impl TaskClassifier for HonestForestClassifier {
    fn predict_task(&self, _task_id: usize, x: &[f64]) -> Result<usize> {
        self.predict(x)
    }
}

/// Fraction of `test` rows misclassified, predicting with `test.task_id()`.
pub fn error_rate<M: TaskClassifier + ?Sized>(model: &M, test: &TaskDataset) -> Result<f64> {
    let mut wrong = 0usize;
    for (x, &y) in test.rows().zip(test.labels()) {
        if model.predict_task(test.task_id(), x)? != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// Which data the learner saw before being scored on a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Only the task's own data.
    SingleTask,
    /// Every task up to and including this one.
    UpToTask,
    /// The whole stream.
    AllData,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::SingleTask => "single_task",
            Condition::UpToTask => "up_to_task",
            Condition::AllData => "all_data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub task_id: usize,
    pub condition: Condition,
    pub errors: Vec<f64>,
    pub mean: f64,
    pub n_train: usize,
}

impl ErrorEstimate {
    pub fn new(
        task_id: usize,
        condition: Condition,
        errors: Vec<f64>,
        n_train: usize,
    ) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidData(
                "an estimate needs at least one repetition".into(),
            ));
        }
        if errors.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidData("errors must lie in [0, 1]".into()));
        }
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        Ok(Self {
            task_id,
            condition,
            errors,
            mean,
            n_train,
        })
    }

    /// Standard error of the mean; zero for a single repetition.
    pub fn std_error(&self) -> f64 {
        let n = self.errors.len();
        if n < 2 {
            return 0.0;
        }
        let var = self
            .errors
            .iter()
            .map(|e| (e - self.mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Trains with `fit` on `train` once per repetition and scores on `test`.
///
/// Repetition `r` receives `seed.child("rep", r)`; the factory is expected
/// to draw or resample its training data from that stream when it needs
/// fresh data.
pub fn estimate_error<M, F>(
    condition: Condition,
    train: &[TaskDataset],
    test: &TaskDataset,
    repetitions: usize,
    seed: &SeedStream,
    fit: F,
) -> Result<ErrorEstimate>
where
    M: TaskClassifier,
    F: Fn(&[TaskDataset], &SeedStream) -> Result<M>,
{
    if train.is_empty() {
        return Err(Error::InvalidData("empty training slice".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidConfig(
            "repetitions must be at least 1".into(),
        ));
    }
    let errors = (0..repetitions)
        .map(|r| {
            let model = fit(train, &seed.child("rep", r as u64))?;
            error_rate(&model, test)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_train = train.iter().map(TaskDataset::len).sum();
    ErrorEstimate::new(test.task_id(), condition, errors, n_train)
}

/// `num / den`, undefined when the denominator is zero.
pub fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den).filter(|r| r.is_finite())
}

/// Natural log of a ratio; undefined unless the ratio is positive.
pub fn log_ratio(r: Option<f64>) -> Option<f64> {
    r.filter(|&v| v > 0.0).map(f64::ln)
}

fn check_pair(a: &ErrorEstimate, ca: Condition, b: &ErrorEstimate, cb: Condition) -> Result<()> {
    if a.task_id != b.task_id {
        return Err(Error::InvalidData(format!(
            "estimates for tasks {} and {} cannot be compared",
            a.task_id, b.task_id
        )));
    }
    if a.condition != ca || b.condition != cb {
        return Err(Error::InvalidData(format!(
            "expected conditions {} and {}, got {} and {}",
            ca.as_str(),
            cb.as_str(),
            a.condition.as_str(),
            b.condition.as_str()
        )));
    }
    Ok(())
}

pub fn transfer_efficiency(single: &ErrorEstimate, all: &ErrorEstimate) -> Result<Option<f64>> {
    check_pair(single, Condition::SingleTask, all, Condition::AllData)?;
    Ok(ratio(single.mean, all.mean))
}

pub fn forward_transfer(single: &ErrorEstimate, up_to: &ErrorEstimate) -> Result<Option<f64>> {
    check_pair(single, Condition::SingleTask, up_to, Condition::UpToTask)?;
    Ok(ratio(single.mean, up_to.mean))
}

pub fn backward_transfer(up_to: &ErrorEstimate, all: &ErrorEstimate) -> Result<Option<f64>> {
    check_pair(up_to, Condition::UpToTask, all, Condition::AllData)?;
    Ok(ratio(up_to.mean, all.mean))
}

/// Transfer efficiencies of one task from its three mean errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskTransfer {
    pub task_id: usize,
    pub single: f64,
    pub up_to: f64,
    pub all: f64,
    pub te: Option<f64>,
    pub fte: Option<f64>,
    pub bte: Option<f64>,
}

impl TaskTransfer {
    pub fn from_means(task_id: usize, single: f64, up_to: f64, all: f64) -> Self {
        Self {
            task_id,
            single,
            up_to,
            all,
            te: ratio(single, all),
            fte: ratio(single, up_to),
            bte: ratio(up_to, all),
        }
    }

    pub fn from_estimates(
        single: &ErrorEstimate,
        up_to: &ErrorEstimate,
        all: &ErrorEstimate,
    ) -> Result<Self> {
        Ok(Self {
            task_id: single.task_id,
            single: single.mean,
            up_to: up_to.mean,
            all: all.mean,
            te: transfer_efficiency(single, all)?,
            fte: forward_transfer(single, up_to)?,
            bte: backward_transfer(up_to, all)?,
        })
    }

    pub fn log_te(&self) -> Option<f64> {
        log_ratio(self.te)
    }

    pub fn log_fte(&self) -> Option<f64> {
        log_ratio(self.fte)
    }

    pub fn log_bte(&self) -> Option<f64> {
        log_ratio(self.bte)
    }

    /// `|te - fte * bte|`, or `None` when any ratio is undefined.
    pub fn residual(&self) -> Option<f64> {
        Some((self.te? - self.fte? * self.bte?).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub tasks: Vec<TaskTransfer>,
    pub repetitions: usize,
    pub n_train: Vec<usize>,
}

/// Per-task factorization residuals `|te - fte * bte|`.
pub fn factorization_check(report: &TransferReport) -> Vec<(usize, Option<f64>)> {
    report
        .tasks
        .iter()
        .map(|t| (t.task_id, t.residual()))
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidData("x and y lengths differ".into()));
    }
    if xs.len() < 3 {
        return Err(Error::TooSmall(format!(
            "a log-log slope needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidData(
            "log-log fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("x values are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidData(
            "spearman needs two equal-length series of 2+ points".into(),
        ));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::InvalidData(
            "spearman is undefined for a constant series".into(),
        ));
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}
