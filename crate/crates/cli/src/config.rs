//! Experiment configuration files (TOML).
//!
//! Every field has a default, so an empty file with only `kind` set runs the
//! standard setting for that experiment.

use std::path::{Path, PathBuf};

use omniforest::{ForestConfig, LearnerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    XorXnor,
    RxorSweep,
    RxorSampleSweep,
    Spirals,
    LabelShuffle,
    RotationSweep,
    Recruitment,
    Scaling,
    CustomCsv,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::XorXnor => "xor_xnor",
            ExperimentKind::RxorSweep => "rxor_sweep",
            ExperimentKind::RxorSampleSweep => "rxor_sample_sweep",
            ExperimentKind::Spirals => "spirals",
            ExperimentKind::LabelShuffle => "label_shuffle",
            ExperimentKind::RotationSweep => "rotation_sweep",
            ExperimentKind::Recruitment => "recruitment",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::CustomCsv => "custom_csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub repetitions: usize,
    pub output: PathBuf,
    /// Record fit wall time in the `wall_time_ms` column.
    pub timing: bool,
    /// Held-out rows generated per task.
    pub test_samples: usize,
    pub forest: ForestConfig,
    pub learner: LearnerConfig,
    pub xor_xnor: XorXnorParams,
    pub rxor_sweep: RxorSweepParams,
    pub rxor_sample_sweep: RxorSampleSweepParams,
    pub spirals: SpiralParams,
    pub label_shuffle: LabelShuffleParams,
    pub rotation_sweep: RotationSweepParams,
    pub recruitment: RecruitmentParams,
    pub scaling: ScalingParams,
    pub custom_csv: CustomCsvParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::XorXnor,
            seed: 0,
            repetitions: 30,
            output: PathBuf::from("results.csv"),
            timing: false,
            test_samples: 1000,
            forest: ForestConfig::default(),
            learner: LearnerConfig::default(),
            xor_xnor: XorXnorParams::default(),
            rxor_sweep: RxorSweepParams::default(),
            rxor_sample_sweep: RxorSampleSweepParams::default(),
            spirals: SpiralParams::default(),
            label_shuffle: LabelShuffleParams::default(),
            rotation_sweep: RotationSweepParams::default(),
            recruitment: RecruitmentParams::default(),
            scaling: ScalingParams::default(),
            custom_csv: CustomCsvParams::default(),
        }
    }
}

/// XOR followed by XNOR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XorXnorParams {
    pub n_per_task: usize,
    pub variance: f64,
    /// Total-sample checkpoints; empty means every 50 samples.
    pub checkpoints: Vec<usize>,
}

impl Default for XorXnorParams {
    fn default() -> Self {
        Self {
            n_per_task: 750,
            variance: 0.0625,
            checkpoints: Vec::new(),
        }
    }
}

/// XOR followed by XOR rotated by each angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxorSweepParams {
    pub n_per_task: usize,
    pub variance: f64,
    pub angles: Vec<f64>,
}

impl Default for RxorSweepParams {
    fn default() -> Self {
        Self {
            n_per_task: 100,
            variance: 0.0625,
            angles: (0..=18).map(|i| 5.0 * i as f64).collect(),
        }
    }
}

/// XOR followed by rotated XOR, sweeping the rotated task's sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxorSampleSweepParams {
    pub angle: f64,
    pub variance: f64,
    /// Samples of the first (XOR) task; when absent it matches the
    /// rotated task's size at every grid point.
    pub first_task_n: Option<usize>,
    /// Samples of the rotated task.
    pub second_task_n: Vec<usize>,
}

impl Default for RxorSampleSweepParams {
    fn default() -> Self {
        Self {
            angle: 25.0,
            variance: 0.0625,
            first_task_n: Some(100),
            second_task_n: vec![100, 200, 400, 800, 1600, 3200, 6400],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiralTaskParams {
    pub classes: usize,
    pub turns: f64,
    pub angle_variance: f64,
}

/// Three spirals and five spirals, run in both orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiralParams {
    pub n_per_task: usize,
    pub first: SpiralTaskParams,
    pub second: SpiralTaskParams,
    /// Also run the stream with the two tasks swapped.
    pub both_orders: bool,
    pub checkpoints: Vec<usize>,
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self {
            n_per_task: 750,
            first: SpiralTaskParams {
                classes: 3,
                turns: 2.5,
                angle_variance: 3.0,
            },
            second: SpiralTaskParams {
                classes: 5,
                turns: 3.5,
                angle_variance: 1.876,
            },
            both_orders: true,
            checkpoints: Vec::new(),
        }
    }
}

impl Default for SpiralTaskParams {
    fn default() -> Self {
        SpiralParams::default().first
    }
}

/// XOR followed by XNOR tasks, with and without permuted labels on every
/// task after the first. Runs are paired by seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelShuffleParams {
    pub n_per_task: usize,
    pub n_tasks: usize,
    pub variance: f64,
}

impl Default for LabelShuffleParams {
    fn default() -> Self {
        Self {
            n_per_task: 750,
            n_tasks: 2,
            variance: 0.0625,
        }
    }
}

/// One XOR sample split in half; the second half is rotated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSweepParams {
    pub n_total: usize,
    pub variance: f64,
    pub angles: Vec<f64>,
}

impl Default for RotationSweepParams {
    fn default() -> Self {
        Self {
            n_total: 1500,
            variance: 0.0625,
            angles: (0..=12)
                .map(|i| 15.0 * i as f64)
                .filter(|a| *a < 360.0)
                .collect(),
        }
    }
}

/// Nine rotated XOR tasks, then XOR learned by building, recruiting, a
/// hybrid of both, or a fresh forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecruitmentParams {
    pub prior_tasks: usize,
    pub n_prior: usize,
    pub trees_per_task: usize,
    pub variance: f64,
    /// Sample sizes of the final task.
    pub n_new: Vec<usize>,
    pub recruit_eval_fraction: f64,
    pub hybrid_build_fraction: f64,
}

impl Default for RecruitmentParams {
    fn default() -> Self {
        Self {
            prior_tasks: 9,
            n_prior: 500,
            trees_per_task: 50,
            variance: 0.0625,
            n_new: vec![100, 500, 2000],
            recruit_eval_fraction: 0.3,
            hybrid_build_fraction: 0.5,
        }
    }
}

/// Training cost against total sample size with a fixed per-task size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub n_per_task: usize,
    pub grid: Vec<usize>,
    /// Timed fits per grid point; the minimum is reported.
    pub timing_repeats: usize,
    /// Worker threads used while timing.
    pub threads: usize,
    pub variance: f64,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            n_per_task: 500,
            grid: vec![500, 1000, 2000, 4000, 8000],
            timing_repeats: 5,
            threads: 1,
            variance: 0.0625,
        }
    }
}

/// Tasks read from a CSV file in the `f0..,label,task` format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomCsvParams {
    pub path: Option<PathBuf>,
    pub test_fraction: f64,
}

impl Default for CustomCsvParams {
    fn default() -> Self {
        Self {
            path: None,
            test_fraction: 0.3,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_variance(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name}.variance must be positive, got {v}")))
    }
}

fn check_angles(name: &str, angles: &[f64]) -> Result<(), CliError> {
    if angles.is_empty() {
        return Err(bad(format!("{name}.angles must not be empty")));
    }
    match angles.iter().find(|a| !(0.0..360.0).contains(*a)) {
        Some(a) => Err(bad(format!("{name}: angle {a} outside [0, 360)"))),
        None => Ok(()),
    }
}

fn check_n(name: &str, n: usize) -> Result<(), CliError> {
    if n >= 4 {
        Ok(())
    } else {
        Err(bad(format!("{name} must be at least 4, got {n}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every parameter the configured experiment will use.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: omniforest::Error| bad(e.to_string());
        if self.repetitions == 0 {
            return Err(bad("repetitions must be at least 1"));
        }
        if self.test_samples == 0 {
            return Err(bad("test_samples must be at least 1"));
        }
        self.forest.validate().map_err(cfg)?;
        self.learner.validate().map_err(cfg)?;
        match self.kind {
            ExperimentKind::XorXnor => {
                let p = &self.xor_xnor;
                check_n("xor_xnor.n_per_task", p.n_per_task)?;
                check_variance("xor_xnor", p.variance)?;
                check_checkpoints("xor_xnor", &p.checkpoints, 2 * p.n_per_task)?;
            }
            ExperimentKind::RxorSweep => {
                let p = &self.rxor_sweep;
                check_n("rxor_sweep.n_per_task", p.n_per_task)?;
                check_variance("rxor_sweep", p.variance)?;
                check_angles("rxor_sweep", &p.angles)?;
            }
            ExperimentKind::RxorSampleSweep => {
                let p = &self.rxor_sample_sweep;
                if let Some(n) = p.first_task_n {
                    check_n("rxor_sample_sweep.first_task_n", n)?;
                }
                check_variance("rxor_sample_sweep", p.variance)?;
                check_angles("rxor_sample_sweep", &[p.angle])?;
                if p.second_task_n.is_empty() {
                    return Err(bad("rxor_sample_sweep.second_task_n must not be empty"));
                }
                for &n in &p.second_task_n {
                    check_n("rxor_sample_sweep.second_task_n entries", n)?;
                }
            }
            ExperimentKind::Spirals => {
                let p = &self.spirals;
                check_n("spirals.n_per_task", p.n_per_task)?;
                for (name, t) in [("first", &p.first), ("second", &p.second)] {
                    omniforest::SpiralSpec {
                        classes: t.classes,
                        n: 1,
                        turns: t.turns,
                        angle_variance: t.angle_variance,
                        seed: 0,
                        task_id: 0,
                    }
                    .validate()
                    .map_err(|e| bad(format!("spirals.{name}: {e}")))?;
                }
                check_checkpoints("spirals", &p.checkpoints, 2 * p.n_per_task)?;
            }
            ExperimentKind::LabelShuffle => {
                let p = &self.label_shuffle;
                check_n("label_shuffle.n_per_task", p.n_per_task)?;
                check_variance("label_shuffle", p.variance)?;
                if p.n_tasks < 2 {
                    return Err(bad("label_shuffle.n_tasks must be at least 2"));
                }
            }
            ExperimentKind::RotationSweep => {
                let p = &self.rotation_sweep;
                check_n("rotation_sweep.n_total", p.n_total / 2)?;
                check_variance("rotation_sweep", p.variance)?;
                check_angles("rotation_sweep", &p.angles)?;
            }
            ExperimentKind::Recruitment => {
                let p = &self.recruitment;
                if p.prior_tasks == 0 {
                    return Err(bad("recruitment.prior_tasks must be at least 1"));
                }
                check_n("recruitment.n_prior", p.n_prior)?;
                check_variance("recruitment", p.variance)?;
                if p.n_new.is_empty() {
                    return Err(bad("recruitment.n_new must not be empty"));
                }
                for &n in &p.n_new {
                    check_n("recruitment.n_new entries", n)?;
                }
                self.recruit_strategy(omniforest::Strategy::Hybrid)
                    .validate()
                    .map_err(cfg)?;
            }
            ExperimentKind::Scaling => {
                let p = &self.scaling;
                check_n("scaling.n_per_task", p.n_per_task)?;
                check_variance("scaling", p.variance)?;
                if p.grid.len() < 3 {
                    return Err(bad(format!(
                        "scaling.grid needs at least 3 points to fit a slope, got {}",
                        p.grid.len()
                    )));
                }
                if p.grid.iter().any(|&n| n < p.n_per_task) {
                    return Err(bad("scaling.grid entries must be at least n_per_task"));
                }
                if p.timing_repeats == 0 || p.threads == 0 {
                    return Err(bad(
                        "scaling.timing_repeats and scaling.threads must be at least 1",
                    ));
                }
            }
            ExperimentKind::CustomCsv => {
                let p = &self.custom_csv;
                if p.path.is_none() {
                    return Err(bad("custom_csv.path is required"));
                }
                if !(p.test_fraction > 0.0 && p.test_fraction < 1.0) {
                    return Err(bad("custom_csv.test_fraction must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn recruit_strategy(
        &self,
        mode: omniforest::Strategy,
    ) -> omniforest::StrategyConfig {
        let p = &self.recruitment;
        omniforest::StrategyConfig {
            mode,
            trees_per_task: p.trees_per_task,
            recruit_eval_fraction: p.recruit_eval_fraction,
            hybrid_build_fraction: p.hybrid_build_fraction,
        }
    }
}

fn check_checkpoints(name: &str, checkpoints: &[usize], total: usize) -> Result<(), CliError> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad(format!(
            "{name}.checkpoints must be strictly increasing"
        )));
    }
    if checkpoints.iter().any(|&c| c < 4 || c > total) {
        return Err(bad(format!("{name}.checkpoints must lie in [4, {total}]")));
    }
    Ok(())
}
