//! The canned experiments.
//!
//! A stream experiment trains on a sequence of tasks and measures, at each
//! checkpoint (a total sample count), every seen task's held-out error
//! under three conditions: trained on that task alone, on all tasks up to
//! it, and on everything seen so far. The stream prefix at a checkpoint
//! gives each task in order as many of its samples as remain.
//!
//! Repetition `r` draws its training data and forest seeds from
//! `seed.child("rep", r)`. Task `t`'s forest always uses the stream
//! `rep.child("task", t)`, so the learner trained on task `t` alone grows
//! exactly the forest the lifelong learner grows for it. Test sets are
//! drawn once from the root seed and shared by all repetitions.

use std::time::Instant;

use omniforest::metrics::{error_rate, Condition, TaskTransfer};
use omniforest::persist::to_bytes;
use omniforest::{
    generate_spirals, generate_xor, ingest_csv, loglog_slope, rotate_features, shuffle_labels,
    ForestConfig, HonestForestClassifier, LearnerConfig, OmniLearner, SeedStream, SpiralSpec,
    Strategy, TaskDataset, XorSpec,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, SpiralTaskParams};
use crate::results::{Measure, ResultRow};
use crate::CliError;

type Res<T> = Result<T, CliError>;

/// Smallest share of a task that counts as seen at a checkpoint.
const MIN_TASK_SAMPLES: usize = 4;

/// Draws the full training data of every task for one repetition.
type TrainFn<'a> = dyn Fn(&SeedStream) -> omniforest::Result<Vec<TaskDataset>> + Sync + 'a;

/// Pins a closure to the [`TrainFn`] signature.
fn train_fn<F>(f: F) -> F
where
    F: Fn(&SeedStream) -> omniforest::Result<Vec<TaskDataset>> + Sync,
{
    f
}

/// One task stream measured under one parameter setting.
pub struct Stream<'a> {
    pub param: String,
    pub tests: Vec<TaskDataset>,
    /// Total-sample checkpoints; empty means only the full stream.
    pub checkpoints: Vec<usize>,
    pub train: &'a TrainFn<'a>,
    /// Also measure a pooled, task-unaware forest.
    pub baseline: bool,
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    /// Log-log exponents of training time and model size (scaling only).
    pub time_exponent: Option<f64>,
    pub size_exponent: Option<f64>,
}

impl Report {
    /// Aggregate transfer row for a learner, parameter and task at the
    /// largest checkpoint.
    pub fn final_transfer(&self, learner: &str, param: &str, task_id: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.measure == Measure::Transfer
                    && r.learner == learner
                    && r.param == param
                    && r.task_id == task_id
            })
            .max_by_key(|r| r.n_seen)
    }

    /// Mean error row for a learner, parameter, task and condition at the
    /// largest checkpoint.
    pub fn final_mean_error(
        &self,
        learner: &str,
        param: &str,
        task_id: usize,
        condition: Condition,
    ) -> Option<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.repetition.is_none()
                    && r.measure == Measure::Error(condition)
                    && r.learner == learner
                    && r.param == param
                    && r.task_id == task_id
            })
            .max_by_key(|r| r.n_seen)
    }

    /// Per-repetition errors, ordered by repetition.
    pub fn rep_errors(
        &self,
        learner: &str,
        param: &str,
        task_id: usize,
        n_seen: usize,
        condition: Condition,
    ) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| {
                r.repetition.is_some()
                    && r.measure == Measure::Error(condition)
                    && r.learner == learner
                    && r.param == param
                    && r.task_id == task_id
                    && r.n_seen == n_seen
            })
            .filter_map(|r| r.error)
            .collect()
    }
}

pub fn run(config: &ExperimentConfig) -> Res<Report> {
    config.validate()?;
    match config.kind {
        ExperimentKind::XorXnor => xor_xnor(config),
        ExperimentKind::RxorSweep => rxor_sweep(config),
        ExperimentKind::RxorSampleSweep => rxor_sample_sweep(config),
        ExperimentKind::Spirals => spirals(config),
        ExperimentKind::LabelShuffle => label_shuffle(config),
        ExperimentKind::RotationSweep => rotation_sweep(config),
        ExperimentKind::Recruitment => recruitment(config),
        ExperimentKind::Scaling => scaling(config),
        ExperimentKind::CustomCsv => custom_csv(config),
    }
}

fn xor(
    n: usize,
    variance: f64,
    angle: f64,
    flip: bool,
    task_id: usize,
    seed: &SeedStream,
) -> omniforest::Result<TaskDataset> {
    generate_xor(&XorSpec {
        n,
        variance,
        angle_degrees: angle,
        label_flip: flip,
        seed: seed.seed(),
        task_id,
    })
}

fn spiral(
    n: usize,
    p: &SpiralTaskParams,
    task_id: usize,
    seed: &SeedStream,
) -> omniforest::Result<TaskDataset> {
    generate_spirals(&SpiralSpec {
        classes: p.classes,
        n,
        turns: p.turns,
        angle_variance: p.angle_variance,
        seed: seed.seed(),
        task_id,
    })
}

fn root(config: &ExperimentConfig) -> SeedStream {
    SeedStream::new(config.seed)
}

fn test_seed(config: &ExperimentConfig, t: usize) -> SeedStream {
    root(config).child("test", t as u64)
}

fn data_seed(rep: &SeedStream, t: usize) -> SeedStream {
    rep.child("data", t as u64)
}

fn default_checkpoints(total: usize, step: usize) -> Vec<usize> {
    (1..=total / step)
        .map(|i| i * step)
        .chain((!total.is_multiple_of(step)).then_some(total))
        .collect()
}

fn xor_xnor(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.xor_xnor;
    let tests = vec![
        xor(
            config.test_samples,
            p.variance,
            0.0,
            false,
            0,
            &test_seed(config, 0),
        )?,
        xor(
            config.test_samples,
            p.variance,
            0.0,
            true,
            1,
            &test_seed(config, 1),
        )?,
    ];
    let train = train_fn(|rep| {
        Ok(vec![
            xor(p.n_per_task, p.variance, 0.0, false, 0, &data_seed(rep, 0))?,
            xor(p.n_per_task, p.variance, 0.0, true, 1, &data_seed(rep, 1))?,
        ])
    });
    let checkpoints = if p.checkpoints.is_empty() {
        default_checkpoints(2 * p.n_per_task, 50)
    } else {
        p.checkpoints.clone()
    };
    let stream = Stream {
        param: String::new(),
        tests,
        checkpoints,
        train: &train,
        baseline: true,
    };
    run_streams(config, &[stream])
}

fn angle_param(angle: f64) -> String {
    format!("angle={angle}")
}

fn rxor_sweep(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.rxor_sweep;
    let xor_test = xor(
        config.test_samples,
        p.variance,
        0.0,
        false,
        0,
        &test_seed(config, 0),
    )?;
    let trains: Vec<_> = p
        .angles
        .iter()
        .map(|&angle| {
            train_fn(move |rep| {
                Ok(vec![
                    xor(p.n_per_task, p.variance, 0.0, false, 0, &data_seed(rep, 0))?,
                    xor(
                        p.n_per_task,
                        p.variance,
                        angle,
                        false,
                        1,
                        &data_seed(rep, 1),
                    )?,
                ])
            })
        })
        .collect();
    let streams = p
        .angles
        .iter()
        .zip(&trains)
        .map(|(&angle, train)| {
            Ok(Stream {
                param: angle_param(angle),
                tests: vec![
                    xor_test.clone(),
                    xor(
                        config.test_samples,
                        p.variance,
                        angle,
                        false,
                        1,
                        &test_seed(config, 1),
                    )?,
                ],
                checkpoints: Vec::new(),
                train,
                baseline: false,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    run_streams(config, &streams)
}

fn rxor_sample_sweep(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.rxor_sample_sweep;
    let tests = vec![
        xor(
            config.test_samples,
            p.variance,
            0.0,
            false,
            0,
            &test_seed(config, 0),
        )?,
        xor(
            config.test_samples,
            p.variance,
            p.angle,
            false,
            1,
            &test_seed(config, 1),
        )?,
    ];
    let trains: Vec<_> = p
        .second_task_n
        .iter()
        .map(|&n2| {
            train_fn(move |rep| {
                Ok(vec![
                    xor(
                        p.first_task_n.unwrap_or(n2),
                        p.variance,
                        0.0,
                        false,
                        0,
                        &data_seed(rep, 0),
                    )?,
                    xor(n2, p.variance, p.angle, false, 1, &data_seed(rep, 1))?,
                ])
            })
        })
        .collect();
    let streams: Vec<Stream> = p
        .second_task_n
        .iter()
        .zip(&trains)
        .map(|(&n2, train)| Stream {
            param: format!("n2={n2}"),
            tests: tests.clone(),
            checkpoints: Vec::new(),
            train,
            baseline: false,
        })
        .collect();
    run_streams(config, &streams)
}

fn spirals(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.spirals;
    let mut orders = vec![("forward", [&p.first, &p.second])];
    if p.both_orders {
        orders.push(("reverse", [&p.second, &p.first]));
    }
    let trains: Vec<_> = orders
        .iter()
        .map(|&(_, [a, b])| {
            train_fn(move |rep| {
                Ok(vec![
                    spiral(p.n_per_task, a, 0, &data_seed(rep, 0))?,
                    spiral(p.n_per_task, b, 1, &data_seed(rep, 1))?,
                ])
            })
        })
        .collect();
    let checkpoints = if p.checkpoints.is_empty() {
        default_checkpoints(2 * p.n_per_task, 250)
    } else {
        p.checkpoints.clone()
    };
    let streams = orders
        .iter()
        .zip(&trains)
        .map(|(&(name, [a, b]), train)| {
            // Test sets are keyed by spiral shape, not stream position.
            let test_for = |s: &SpiralTaskParams, t: usize| {
                spiral(config.test_samples, s, t, &test_seed(config, s.classes))
            };
            Ok(Stream {
                param: format!("order={name}:{}-{}", a.classes, b.classes),
                tests: vec![test_for(a, 0)?, test_for(b, 1)?],
                checkpoints: checkpoints.clone(),
                train,
                baseline: true,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    run_streams(config, &streams)
}

fn label_shuffle(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.label_shuffle;
    // One permutation per task, shared by its training and test data.
    let shuffle = |d: TaskDataset, t: usize| -> omniforest::Result<TaskDataset> {
        Ok(shuffle_labels(&d, &root(config).child("shuffle", t as u64))?.0)
    };
    let task = |n: usize, t: usize, seed: &SeedStream, shuffled: bool| {
        let d = xor(n, p.variance, 0.0, t > 0, t, seed)?;
        if shuffled && t > 0 {
            shuffle(d, t)
        } else {
            Ok(d)
        }
    };
    let tests = |shuffled: bool| {
        (0..p.n_tasks)
            .map(|t| task(config.test_samples, t, &test_seed(config, t), shuffled))
            .collect::<omniforest::Result<Vec<_>>>()
    };
    let plain = train_fn(|rep| {
        (0..p.n_tasks)
            .map(|t| task(p.n_per_task, t, &data_seed(rep, t), false))
            .collect()
    });
    let shuffled = train_fn(|rep| {
        (0..p.n_tasks)
            .map(|t| task(p.n_per_task, t, &data_seed(rep, t), true))
            .collect()
    });
    let streams = vec![
        Stream {
            param: "labels=plain".into(),
            tests: tests(false)?,
            checkpoints: Vec::new(),
            train: &plain,
            baseline: false,
        },
        Stream {
            param: "labels=shuffled".into(),
            tests: tests(true)?,
            checkpoints: Vec::new(),
            train: &shuffled,
            baseline: false,
        },
    ];
    run_streams(config, &streams)
}

fn rotation_sweep(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.rotation_sweep;
    let half = p.n_total / 2;
    let base_test = xor(
        config.test_samples,
        p.variance,
        0.0,
        false,
        0,
        &test_seed(config, 0),
    )?;
    let trains: Vec<_> = p
        .angles
        .iter()
        .map(|&angle| {
            train_fn(move |rep| {
                let all = xor(2 * half, p.variance, 0.0, false, 0, &data_seed(rep, 0))?;
                let first: Vec<usize> = (0..half).collect();
                let second: Vec<usize> = (half..2 * half).collect();
                let rotated = rotate_features(&all.select(&second)?, angle)?.with_task_id(1);
                Ok(vec![all.select(&first)?, rotated])
            })
        })
        .collect();
    let streams = p
        .angles
        .iter()
        .zip(&trains)
        .map(|(&angle, train)| {
            Ok(Stream {
                param: angle_param(angle),
                tests: vec![
                    base_test.clone(),
                    rotate_features(&base_test, angle)?.with_task_id(1),
                ],
                checkpoints: Vec::new(),
                train,
                baseline: false,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    run_streams(config, &streams)
}

fn custom_csv(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.custom_csv;
    let path = p.path.as_ref().expect("validated");
    let seq = ingest_csv(path, p.test_fraction, &root(config).child("split", 0))?;
    let tests: Vec<TaskDataset> = seq.tasks().iter().map(|s| s.test.clone()).collect();
    let trains: Vec<TaskDataset> = seq.tasks().iter().map(|s| s.train.clone()).collect();
    let train = train_fn(move |_| Ok(trains.clone()));
    let stream = Stream {
        param: String::new(),
        tests,
        checkpoints: Vec::new(),
        train: &train,
        baseline: true,
    };
    run_streams(config, &[stream])
}

/// Runs every stream and aggregates. Row order is fixed by stream, then
/// learner, repetition, task, checkpoint and condition.
pub fn run_streams(config: &ExperimentConfig, streams: &[Stream]) -> Res<Report> {
    let experiment = config.kind.as_str();
    let mut rows = Vec::new();
    for stream in streams {
        let per_rep: Vec<Vec<Measurement>> = (0..config.repetitions)
            .into_par_iter()
            .map(|r| measure_rep(config, stream, r))
            .collect::<Res<_>>()?;
        let mut block: Vec<ResultRow> = Vec::new();
        for (r, ms) in per_rep.iter().enumerate() {
            for m in ms {
                let mut row = ResultRow::error(
                    experiment,
                    m.learner,
                    &stream.param,
                    Some(r),
                    m.task_id,
                    m.n_seen,
                    m.condition,
                    m.error,
                );
                row.wall_time_ms = m.wall_time_ms;
                block.push(row);
            }
        }
        block.extend(aggregate(experiment, &stream.param, &per_rep));
        block.sort_by(|a, b| {
            (
                learner_rank(&a.learner),
                &a.learner,
                a.repetition.is_none(),
                a.repetition,
                a.task_id,
                a.n_seen,
                a.measure,
            )
                .cmp(&(
                    learner_rank(&b.learner),
                    &b.learner,
                    b.repetition.is_none(),
                    b.repetition,
                    b.task_id,
                    b.n_seen,
                    b.measure,
                ))
        });
        rows.extend(block);
    }
    Ok(Report {
        rows,
        ..Default::default()
    })
}

fn learner_rank(name: &str) -> usize {
    ["odif", "build", "recruit", "hybrid", "rf"]
        .iter()
        .position(|n| *n == name)
        .unwrap_or(usize::MAX)
}

#[derive(Debug, Clone)]
struct Measurement {
    learner: &'static str,
    task_id: usize,
    n_seen: usize,
    condition: Condition,
    error: f64,
    wall_time_ms: Option<f64>,
}

fn timed<T>(timing: bool, f: impl FnOnce() -> Res<T>) -> Res<(T, Option<f64>)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, timing.then(|| start.elapsed().as_secs_f64() * 1e3)))
}

fn task_seed(rep: &SeedStream, t: usize) -> SeedStream {
    rep.child("task", t as u64)
}

/// All training rows of `tasks` as one task-unaware dataset.
fn pooled(tasks: &[TaskDataset]) -> omniforest::Result<TaskDataset> {
    let k = tasks
        .iter()
        .map(TaskDataset::class_count)
        .max()
        .expect("non-empty");
    let p = tasks[0].n_features();
    let features = tasks
        .iter()
        .flat_map(|t| t.features().iter().copied())
        .collect();
    let labels = tasks
        .iter()
        .flat_map(|t| t.labels().iter().copied())
        .collect();
    TaskDataset::new(features, p, labels, 0, k)
}

fn measure_rep(config: &ExperimentConfig, stream: &Stream, r: usize) -> Res<Vec<Measurement>> {
    let rep = root(config).child("rep", r as u64);
    let full = (stream.train)(&data_root(&rep))?;
    if full.len() != stream.tests.len() {
        return Err(CliError::Runtime(omniforest::Error::InvalidData(
            "stream has a different number of train and test tasks".into(),
        )));
    }
    let total: usize = full.iter().map(TaskDataset::len).sum();
    let checkpoints = if stream.checkpoints.is_empty() {
        vec![total]
    } else {
        stream.checkpoints.clone()
    };
    let mut out = Vec::new();
    for &n_seen in &checkpoints {
        let mut seen = Vec::new();
        let mut left = n_seen;
        for task in &full {
            let take = left.min(task.len());
            left -= take;
            if take < MIN_TASK_SAMPLES {
                break;
            }
            seen.push(task.head(take)?);
        }
        if seen.is_empty() {
            continue;
        }
        out.extend(measure_checkpoint(config, stream, &rep, &seen, n_seen)?);
    }
    Ok(out)
}

/// Repetition data seeds live under their own branch so forest seeds and
/// data seeds never collide.
fn data_root(rep: &SeedStream) -> SeedStream {
    rep.child("draw", 0)
}

fn measure_checkpoint(
    config: &ExperimentConfig,
    stream: &Stream,
    rep: &SeedStream,
    seen: &[TaskDataset],
    n_seen: usize,
) -> Res<Vec<Measurement>> {
    let forest = &config.forest;
    let timing = config.timing;
    let mut out = Vec::new();
    let push = |out: &mut Vec<Measurement>, learner, t: usize, condition, error, wall| {
        out.push(Measurement {
            learner,
            task_id: seen[t].task_id(),
            n_seen,
            condition,
            error,
            wall_time_ms: wall,
        })
    };

    // Lifelong learner, one task at a time.
    let mut learner = OmniLearner::new(config.learner.clone())?;
    let mut elapsed = Some(0.0);
    let mut single_first = None;
    for (t, task) in seen.iter().enumerate() {
        let (_, wall) = timed(timing, || {
            Ok(learner.add_task(task.clone(), forest, &task_seed(rep, t))?)
        })?;
        elapsed = elapsed.zip(wall).map(|(a, b)| a + b);
        let err = error_rate(&learner, &stream.tests[t])?;
        if t == 0 {
            single_first = Some((err, elapsed));
        }
        push(&mut out, "odif", t, Condition::UpToTask, err, elapsed);
    }
    for t in 0..seen.len() {
        let err = error_rate(&learner, &stream.tests[t])?;
        push(&mut out, "odif", t, Condition::AllData, err, elapsed);
    }
    for (t, task) in seen.iter().enumerate() {
        let (err, wall) = if t == 0 {
            single_first.expect("first task measured")
        } else {
            let (single, wall) = timed(timing, || {
                let mut l = OmniLearner::new(config.learner.clone())?;
                l.add_task(task.clone(), forest, &task_seed(rep, t))?;
                Ok(l)
            })?;
            (error_rate(&single, &stream.tests[t])?, wall)
        };
        push(&mut out, "odif", t, Condition::SingleTask, err, wall);
    }

    if stream.baseline {
        // Pooled forest with as many trees as the lifelong learner holds.
        // With one task it is the single-task forest; the stream over all
        // seen tasks uses the last task's seed so it matches `up_to` there.
        let fit_pooled = |upto: usize| {
            timed(timing, || {
                let cfg = ForestConfig {
                    n_estimators: forest.n_estimators * (upto + 1),
                    ..forest.clone()
                };
                Ok(HonestForestClassifier::fit(
                    &pooled(&seen[..=upto])?,
                    &cfg,
                    config.learner.smoothing,
                    &task_seed(rep, upto),
                )?)
            })
        };
        let last = seen.len() - 1;
        let mut all_model = None;
        for (t, task) in seen.iter().enumerate() {
            let (single, wall) = timed(timing, || {
                Ok(HonestForestClassifier::fit(
                    task,
                    forest,
                    config.learner.smoothing,
                    &task_seed(rep, t),
                )?)
            })?;
            push(
                &mut out,
                "rf",
                t,
                Condition::SingleTask,
                rf_error(&single, &stream.tests[t])?,
                wall,
            );
            let (up_to, wall) = fit_pooled(t)?;
            push(
                &mut out,
                "rf",
                t,
                Condition::UpToTask,
                rf_error(&up_to, &stream.tests[t])?,
                wall,
            );
            if t == last {
                all_model = Some((up_to, wall));
            }
        }
        let (all, wall) = all_model.expect("at least one task");
        for t in 0..seen.len() {
            push(
                &mut out,
                "rf",
                t,
                Condition::AllData,
                rf_error(&all, &stream.tests[t])?,
                wall,
            );
        }
    }
    Ok(out)
}

/// Error of a task-unaware forest; predictions outside the task's classes
/// count as mistakes.
fn rf_error(model: &HonestForestClassifier, test: &TaskDataset) -> Res<f64> {
    let mut wrong = 0usize;
    for (x, &y) in test.rows().zip(test.labels()) {
        if model.predict(x)? != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// Strategy name, new-task sample size, error, wall time.
type RecruitMeasurement = (&'static str, usize, f64, Option<f64>);

fn aggregate(experiment: &str, param: &str, per_rep: &[Vec<Measurement>]) -> Vec<ResultRow> {
    use std::collections::BTreeMap;
    // (learner, task, n_seen) -> condition -> errors
    let mut groups: BTreeMap<(&str, usize, usize), BTreeMap<Condition, Vec<f64>>> = BTreeMap::new();
    for ms in per_rep {
        for m in ms {
            groups
                .entry((m.learner, m.task_id, m.n_seen))
                .or_default()
                .entry(m.condition)
                .or_default()
                .push(m.error);
        }
    }
    let mut rows = Vec::new();
    for ((learner, task_id, n_seen), conds) in groups {
        let mean = |c: Condition| {
            conds
                .get(&c)
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        for (&c, v) in &conds {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            rows.push(ResultRow::error(
                experiment, learner, param, None, task_id, n_seen, c, m,
            ));
        }
        if let (Some(s), Some(u), Some(a)) = (
            mean(Condition::SingleTask),
            mean(Condition::UpToTask),
            mean(Condition::AllData),
        ) {
            let t = TaskTransfer::from_means(task_id, s, u, a);
            rows.push(ResultRow::transfer(experiment, learner, param, n_seen, &t));
        }
    }
    rows
}

fn recruitment(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.recruitment;
    let experiment = config.kind.as_str();
    let root = root(config);
    // Rotations in hundredths of a degree, fixed across repetitions.
    let angles: Vec<f64> = (0..p.prior_tasks)
        .map(|t| (root.child("angle", t as u64).seed() % 36_000) as f64 / 100.0)
        .collect();
    let new_task = p.prior_tasks;
    let test = xor(
        config.test_samples,
        p.variance,
        0.0,
        false,
        new_task,
        &test_seed(config, new_task),
    )?;
    let forest = ForestConfig {
        n_estimators: p.trees_per_task,
        ..config.forest.clone()
    };
    let max_new = *p.n_new.iter().max().expect("validated");

    let per_rep: Vec<Vec<RecruitMeasurement>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| -> Res<_> {
            let rep = root.child("rep", r as u64);
            let draw = data_root(&rep);
            let mut prior = OmniLearner::new(LearnerConfig {
                voter: omniforest::VoterKind::Leaf,
                ..config.learner.clone()
            })?;
            for (t, &angle) in angles.iter().enumerate() {
                let d = xor(p.n_prior, p.variance, angle, false, t, &data_seed(&draw, t))?;
                prior.add_task(d, &forest, &task_seed(&rep, t))?;
            }
            let full_new = xor(
                max_new,
                p.variance,
                0.0,
                false,
                new_task,
                &data_seed(&draw, new_task),
            )?;
            let seed = task_seed(&rep, new_task);
            let mut out = Vec::new();
            for &n in &p.n_new {
                let data = full_new.head(n)?;
                for (name, mode) in [
                    ("build", Strategy::Build),
                    ("recruit", Strategy::Recruit),
                    ("hybrid", Strategy::Hybrid),
                ] {
                    let mut l = prior.clone().with_strategy(config.recruit_strategy(mode))?;
                    let (_, wall) = timed(config.timing, || {
                        match mode {
                            Strategy::Build => l.add_task(data.clone(), &forest, &seed)?,
                            _ => l.add_task_recruiting(data.clone(), &forest, &seed)?,
                        }
                        Ok(())
                    })?;
                    out.push((name, n, error_rate(&l, &test)?, wall));
                }
                let (rf, wall) = timed(config.timing, || {
                    Ok(HonestForestClassifier::fit(
                        &data,
                        &forest,
                        config.learner.smoothing,
                        &seed,
                    )?)
                })?;
                out.push(("rf", n, rf_error(&rf, &test)?, wall));
            }
            Ok(out)
        })
        .collect::<Res<_>>()?;

    let mut rows = Vec::new();
    for (r, ms) in per_rep.iter().enumerate() {
        for &(learner, n, err, wall) in ms {
            let mut row = ResultRow::error(
                experiment,
                learner,
                "",
                Some(r),
                new_task,
                n,
                Condition::AllData,
                err,
            );
            row.wall_time_ms = wall;
            rows.push(row);
        }
    }
    let n_runs = per_rep.len() as f64;
    let first = per_rep.first().map(Vec::as_slice).unwrap_or_default();
    for (i, &(learner, n, _, _)) in first.iter().enumerate() {
        let mean = per_rep.iter().map(|ms| ms[i].2).sum::<f64>() / n_runs;
        rows.push(ResultRow::error(
            experiment,
            learner,
            "",
            None,
            new_task,
            n,
            Condition::AllData,
            mean,
        ));
    }
    rows.sort_by(|a, b| {
        (
            learner_rank(&a.learner),
            a.repetition.is_none(),
            a.repetition,
            a.n_seen,
        )
            .cmp(&(
                learner_rank(&b.learner),
                b.repetition.is_none(),
                b.repetition,
                b.n_seen,
            ))
    });
    Ok(Report {
        rows,
        ..Default::default()
    })
}

/// Training cost of a building learner over streams of growing length.
///
/// Grid point `n` trains `n / n_per_task` tasks (XOR rotated by 15 degrees
/// per task) from a single data draw. Reported time is the fastest of
/// `timing_repeats` fits; model size is the saved file length, retained
/// data included.
fn scaling(config: &ExperimentConfig) -> Res<Report> {
    let p = &config.scaling;
    let experiment = config.kind.as_str();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(p.threads)
        .build()
        .map_err(|e| CliError::Runtime(omniforest::Error::InvalidConfig(e.to_string())))?;
    let mut rows = Vec::new();
    let mut ns = Vec::new();
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    let rep_seed = root(config).child("rep", 0);
    for &n in &p.grid {
        let tasks = n / p.n_per_task;
        let draw = data_root(&rep_seed);
        let data = (0..tasks)
            .map(|t| {
                xor(
                    p.n_per_task,
                    p.variance,
                    (15 * t % 360) as f64,
                    false,
                    t,
                    &data_seed(&draw, t),
                )
            })
            .collect::<omniforest::Result<Vec<_>>>()?;
        let fit = || -> Res<OmniLearner> {
            let mut l = OmniLearner::new(config.learner.clone())?;
            for (t, d) in data.iter().enumerate() {
                l.add_task(d.clone(), &config.forest, &task_seed(&rep_seed, t))?;
            }
            Ok(l)
        };
        let mut best = f64::INFINITY;
        let mut model = None;
        for _ in 0..p.timing_repeats {
            let start = Instant::now();
            let l = pool.install(fit)?;
            best = best.min(start.elapsed().as_secs_f64() * 1e3);
            model = Some(l);
        }
        let bytes = to_bytes(&model.expect("timed at least once"))?.len();
        let mut row = ResultRow::error(
            experiment,
            "odif",
            &format!("tasks={tasks}"),
            Some(0),
            0,
            n,
            Condition::AllData,
            0.0,
        );
        row.error = None;
        row.wall_time_ms = Some(best);
        row.model_bytes = Some(bytes);
        rows.push(row);
        ns.push(n as f64);
        times.push(best.max(1e-6));
        sizes.push(bytes as f64);
    }
    Ok(Report {
        rows,
        time_exponent: Some(loglog_slope(&ns, &times)?),
        size_exponent: Some(loglog_slope(&ns, &sizes)?),
    })
}
