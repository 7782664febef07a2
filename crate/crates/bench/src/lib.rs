//! Fixtures shared by the benchmarks.

use omniforest::{
    generate_xor, ForestConfig, LearnerConfig, OmniLearner, SeedStream, TaskDataset, XorSpec,
};

/// XOR task `t` of a stream, rotated by 15 degrees per task.
pub fn rotated_xor(n: usize, t: usize) -> TaskDataset {
    generate_xor(&XorSpec {
        n,
        angle_degrees: (15 * t % 360) as f64,
        seed: t as u64,
        task_id: t,
        ..XorSpec::default()
    })
    .expect("valid spec")
}

/// A learner trained on `tasks` rotated XOR tasks of `n` samples each.
pub fn trained_learner(tasks: usize, n: usize) -> OmniLearner {
    let mut learner = OmniLearner::new(LearnerConfig::default()).expect("default config");
    for t in 0..tasks {
        learner
            .add_task(
                rotated_xor(n, t),
                &ForestConfig::default(),
                &SeedStream::new(t as u64),
            )
            .expect("fit");
    }
    learner
}
