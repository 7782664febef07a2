//! Synthetic task generators and label/feature transforms.
//!
//! Generators draw each row independently in order, so the first `m` rows of
//! an `n`-row draw equal an `m`-row draw with the same seed.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{SeedStream, TaskDataset};
use crate::error::{Error, Result};

/// Gaussian XOR: class 0 at `±[0.5, 0.5]`, class 1 at `±[0.5, -0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XorSpec {
    pub n: usize,
    /// Per-coordinate noise variance.
    pub variance: f64,
    /// Counterclockwise rotation applied after sampling.
    pub angle_degrees: f64,
    /// Swap the two labels (XNOR).
    pub label_flip: bool,
    pub seed: u64,
    pub task_id: usize,
}

impl Default for XorSpec {
    fn default() -> Self {
        Self {
            n: 750,
            variance: 0.25 * 0.25,
            angle_degrees: 0.0,
            label_flip: false,
            seed: 0,
            task_id: 0,
        }
    }
}

impl XorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("xor n must be at least 1".into()));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "xor variance must be positive, got {}",
                self.variance
            )));
        }
        if !(0.0..360.0).contains(&self.angle_degrees) {
            return Err(Error::InvalidConfig(format!(
                "xor angle must lie in [0, 360), got {}",
                self.angle_degrees
            )));
        }
        Ok(())
    }
}

pub fn generate_xor(spec: &XorSpec) -> Result<TaskDataset> {
    spec.validate()?;
    let mut rng = SeedStream::new(spec.seed).rng();
    let noise = Normal::new(0.0, spec.variance.sqrt()).expect("validated variance");
    let (sin, cos) = spec.angle_degrees.to_radians().sin_cos();
    let mut features = Vec::with_capacity(2 * spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let class = rng.random_range(0..2usize);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mx = 0.5 * sign;
        let my = if class == 0 { mx } else { -mx };
        let x = mx + noise.sample(&mut rng);
        let y = my + noise.sample(&mut rng);
        features.push(cos * x - sin * y);
        features.push(sin * x + cos * y);
        labels.push(if spec.label_flip { 1 - class } else { class });
    }
    TaskDataset::new(features, 2, labels, spec.task_id, 2)
}

/// `K` interleaved spirals in the unit disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiralSpec {
    pub classes: usize,
    pub n: usize,
    pub turns: f64,
    /// Variance of the Gaussian noise added to each angle.
    pub angle_variance: f64,
    pub seed: u64,
    pub task_id: usize,
}

impl SpiralSpec {
    /// Three spirals, 2.5 turns, angle variance 3.
    pub fn three(n: usize, seed: u64) -> Self {
        Self {
            classes: 3,
            n,
            turns: 2.5,
            angle_variance: 3.0,
            seed,
            task_id: 0,
        }
    }

    /// Five spirals, 3.5 turns, angle variance 1.876.
    pub fn five(n: usize, seed: u64) -> Self {
        Self {
            classes: 5,
            n,
            turns: 3.5,
            angle_variance: 1.876,
            seed,
            task_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(
                "spirals need at least 2 classes".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("spiral n must be at least 1".into()));
        }
        if !(self.turns > 0.0 && self.turns.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "spiral turns must be positive, got {}",
                self.turns
            )));
        }
        if !(self.angle_variance >= 0.0 && self.angle_variance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "spiral angle variance must be non-negative, got {}",
                self.angle_variance
            )));
        }
        Ok(())
    }
}

impl Default for SpiralSpec {
    fn default() -> Self {
        Self::three(750, 0)
    }
}

/// Class `k` (zero based) sweeps the angle band
/// `[4 pi k t / K, 4 pi (k + 1) t / K]` as the radius grows from 0 to 1.
pub fn generate_spirals(spec: &SpiralSpec) -> Result<TaskDataset> {
    spec.validate()?;
    let mut rng = SeedStream::new(spec.seed).rng();
    let noise = Normal::new(0.0, spec.angle_variance.sqrt()).expect("validated variance");
    let k = spec.classes as f64;
    let band = 4.0 * PI * spec.turns / k;
    let mut features = Vec::with_capacity(2 * spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let class = rng.random_range(0..spec.classes);
        let r: f64 = rng.random_range(0.0..=1.0);
        let base = band * class as f64 + r * band;
        let theta = base + noise.sample(&mut rng);
        let (s, c) = theta.sin_cos();
        features.push(r * c);
        features.push(r * s);
        labels.push(class);
    }
    TaskDataset::new(features, 2, labels, spec.task_id, spec.classes)
}

/// Maps every label through a uniformly random permutation of the classes.
/// Returns the new dataset and the permutation (`new = perm[old]`).
pub fn shuffle_labels(data: &TaskDataset, seed: &SeedStream) -> Result<(TaskDataset, Vec<usize>)> {
    let mut perm: Vec<usize> = (0..data.class_count()).collect();
    perm.shuffle(&mut seed.rng());
    Ok((permute_labels(data, &perm)?, perm))
}

pub fn permute_labels(data: &TaskDataset, perm: &[usize]) -> Result<TaskDataset> {
    let k = data.class_count();
    let mut seen = vec![false; k];
    if perm.len() != k
        || perm
            .iter()
            .any(|&p| p >= k || std::mem::replace(&mut seen[p], true))
    {
        return Err(Error::InvalidData(format!("not a permutation of 0..{k}")));
    }
    data.with_labels(data.labels().iter().map(|&y| perm[y]).collect())
}

/// Inverse of a permutation produced by [`shuffle_labels`].
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Rotates coordinates 0 and 1 counterclockwise by `degrees`.
pub fn rotate_features(data: &TaskDataset, degrees: f64) -> Result<TaskDataset> {
    let p = data.n_features();
    if p < 2 {
        return Err(Error::InvalidData(
            "rotation needs at least 2 features".into(),
        ));
    }
    if !degrees.is_finite() {
        return Err(Error::InvalidConfig("rotation angle must be finite".into()));
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut features = data.features().to_vec();
    for row in features.chunks_exact_mut(p) {
        let (x, y) = (row[0], row[1]);
        row[0] = cos * x - sin * y;
        row[1] = sin * x + cos * y;
    }
    data.with_features(features)
}
