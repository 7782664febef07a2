//! Subcommand bodies, kept out of `main` so tests can drive them.

use std::fmt::Write as _;
use std::path::Path;

use omniforest::metrics::error_rate;
use omniforest::{
    generate_spirals, generate_xor, ingest_csv, load_model, read_tasks_csv, save_model,
    write_tasks_csv, OmniLearner, SeedStream, SpiralSpec, TaskDataset, XorSpec,
};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::experiments::{self, Report};
use crate::results::{summary, write_rows_to};
use crate::CliError;

/// Parses an environment name: `xor`, `xnor`, `rxor:<degrees>`,
/// `spirals3` or `spirals5`.
pub fn generate_env(
    name: &str,
    n: usize,
    task_id: usize,
    seed: &SeedStream,
) -> Result<TaskDataset, CliError> {
    let seed = seed.child("generate", task_id as u64).seed();
    let xor = |angle: f64, flip: bool| {
        generate_xor(&XorSpec {
            n,
            angle_degrees: angle,
            label_flip: flip,
            seed,
            task_id,
            ..XorSpec::default()
        })
    };
    let data = match name {
        "xor" => xor(0.0, false)?,
        "xnor" => xor(0.0, true)?,
        "spirals3" | "spirals5" => {
            let spec = if name == "spirals3" {
                SpiralSpec::three(n, seed)
            } else {
                SpiralSpec::five(n, seed)
            };
            generate_spirals(&SpiralSpec { task_id, ..spec })?
        }
        other => match other.strip_prefix("rxor:").map(str::parse::<f64>) {
            Some(Ok(angle)) => xor(angle, false)?,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown environment `{other}` (expected xor, xnor, rxor:<deg>, spirals3, spirals5)"
                )))
            }
        },
    };
    Ok(data)
}

/// Writes one task per environment, with task ids in the given order.
pub fn generate(envs: &[String], n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if envs.is_empty() {
        return Err(CliError::Config("at least one --env is required".into()));
    }
    let root = SeedStream::new(seed);
    let tasks = envs
        .iter()
        .enumerate()
        .map(|(t, e)| generate_env(e, n, t, &root))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&TaskDataset> = tasks.iter().collect();
    let file = std::fs::File::create(out).map_err(|e| CliError::Runtime(e.into()))?;
    write_tasks_csv(std::io::BufWriter::new(file), &refs)?;
    Ok(())
}

/// Runs an experiment, writes its CSV and returns the report with a
/// printable summary.
pub fn run(config: &ExperimentConfig) -> Result<(Report, String), CliError> {
    let report = experiments::run(config)?;
    write_rows_to(&config.output, &report.rows)?;
    let mut text = summary(&report.rows);
    if let (Some(t), Some(s)) = (report.time_exponent, report.size_exponent) {
        let _ = writeln!(text, "time exponent {t:.3}, size exponent {s:.3}");
    }
    Ok((report, text))
}

pub fn scaling(config: &ExperimentConfig) -> Result<(Report, String), CliError> {
    let config = ExperimentConfig {
        kind: ExperimentKind::Scaling,
        ..config.clone()
    };
    run(&config)
}

/// Trains a learner on every task of a CSV file, in order of appearance.
pub fn train_on_csv(data: &Path, config: &ExperimentConfig) -> Result<OmniLearner, CliError> {
    let tasks = read_tasks_csv(data)?;
    let root = SeedStream::new(config.seed);
    let mut learner = OmniLearner::new(config.learner.clone())?;
    for (t, task) in tasks.into_iter().enumerate() {
        learner.add_task(task, &config.forest, &root.child("task", t as u64))?;
    }
    Ok(learner)
}

pub fn save(data: &Path, config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let learner = train_on_csv(data, config)?;
    save_model(&learner, out)?;
    Ok(format!(
        "saved {} tasks, {} representers, {} voters to {}",
        learner.n_tasks(),
        learner.representers().len(),
        learner.n_voters(),
        out.display()
    ))
}

/// Loads a model and, given a CSV, reports each task's error on it.
pub fn load(model: &Path, data: Option<&Path>) -> Result<String, CliError> {
    let learner = load_model(model)?;
    let mut text = format!(
        "{}: {} tasks {:?}, {} representers, {} voters\n",
        model.display(),
        learner.n_tasks(),
        learner.task_ids(),
        learner.representers().len(),
        learner.n_voters()
    );
    if let Some(path) = data {
        for task in read_tasks_csv(path)? {
            let err = error_rate(&learner, &task)?;
            let _ = writeln!(
                text,
                "task {} n={} error={err:.4}",
                task.task_id(),
                task.len()
            );
        }
    }
    Ok(text)
}

pub fn ingest(data: &Path, test_fraction: f64, seed: u64) -> Result<String, CliError> {
    let seq = ingest_csv(
        data,
        test_fraction,
        &SeedStream::new(seed).child("split", 0),
    )?;
    let mut text = format!("{}: {} tasks\n", data.display(), seq.len());
    for split in seq.tasks() {
        let _ = writeln!(
            text,
            "task {} features={} classes={} train={} test={}",
            split.train.task_id(),
            split.train.n_features(),
            split.train.class_count(),
            split.train.len(),
            split.test.len()
        );
    }
    Ok(text)
}
