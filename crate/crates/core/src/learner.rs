//! The lifelong learner.
//!
//! Every task contributes a representer (a forest). Every task owns a row of
//! voters, one per representer, and predicts by averaging that row's
//! posteriors. When a task arrives its row is filled across all existing
//! representers (forward transfer) and every earlier task gains a voter on
//! the new representer, fit on that task's retained data (backward
//! transfer). Existing representers and voters are never modified.

use std::cmp::Reverse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_train_test, subsample_indices, SeedStream, TaskDataset};
use crate::error::{Error, Result};
use crate::forest::{fit_representer, fit_representer_on, ForestConfig, ForestRepresenter};
use crate::voter::{
    argmax, fit_cross_task_voter, fit_cross_task_voter_on, fit_in_task_voter, fit_knn_voter,
    LeafVoter, Posterior, Voter,
};

/// How a new task obtains trees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Grow a new forest for every task.
    #[default]
    Build,
    /// Reuse the best existing trees.
    Recruit,
    /// Grow some trees and recruit the rest.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub mode: Strategy,
    /// Trees assembled for a recruiting or hybrid task.
    pub trees_per_task: usize,
    /// Share of the new task's rows held out to score candidate trees.
    pub recruit_eval_fraction: f64,
    /// Share of `trees_per_task` grown fresh in hybrid mode.
    pub hybrid_build_fraction: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            mode: Strategy::Build,
            trees_per_task: 50,
            recruit_eval_fraction: 0.3,
            hybrid_build_fraction: 0.5,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees_per_task == 0 {
            return Err(Error::InvalidConfig(
                "trees_per_task must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("recruit_eval_fraction", self.recruit_eval_fraction),
            ("hybrid_build_fraction", self.hybrid_build_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Posterior estimator attached to each (task, representer) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoterKind {
    /// Per-leaf class frequencies.
    #[default]
    Leaf,
    /// k-nearest neighbours in representation space. The task's own forest
    /// is grown on a `max_samples` share of its rows and its in-task voter
    /// uses the remainder.
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Additive smoothing of leaf posteriors.
    pub smoothing: f64,
    pub voter: VoterKind,
    pub strategy: StrategyConfig,
    /// Drop task data after fitting; earlier tasks then gain no voters on
    /// later representers.
    pub forward_only: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            smoothing: 1.0,
            voter: VoterKind::Leaf,
            strategy: StrategyConfig::default(),
            forward_only: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing must be a non-negative number, got {}",
                self.smoothing
            )));
        }
        self.strategy.validate()
    }
}

/// A recruited or freshly grown set of trees voting for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedVoter {
    pub representer: usize,
    pub voter: LeafVoter,
}

/// The voters a task predicts with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskVoters {
    /// `voters[j]` reads representer `j`; the row's posteriors are averaged
    /// with equal weight per voter.
    Omni { voters: Vec<Voter> },
    /// Chosen trees from several representers, averaged with equal weight
    /// per tree.
    Selected { voters: Vec<SelectedVoter> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    task_id: usize,
    class_count: usize,
    retained: Option<TaskDataset>,
    voters: TaskVoters,
}

impl TaskState {
    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn voters(&self) -> &TaskVoters {
        &self.voters
    }

    pub fn retained(&self) -> Option<&TaskDataset> {
        self.retained.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmniLearner {
    config: LearnerConfig,
    n_features: Option<usize>,
    representers: Vec<ForestRepresenter>,
    tasks: Vec<TaskState>,
}

impl OmniLearner {
    pub fn new(config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            n_features: None,
            representers: Vec::new(),
            tasks: Vec::new(),
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Replaces the strategy used for tasks added from now on.
    pub fn with_strategy(mut self, strategy: StrategyConfig) -> Result<Self> {
        strategy.validate()?;
        self.config.strategy = strategy;
        Ok(self)
    }

    pub fn representers(&self) -> &[ForestRepresenter] {
        &self.representers
    }

    /// Tasks in arrival order.
    pub fn tasks(&self) -> &[TaskState] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn task_ids(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.task_id).collect()
    }

    pub fn task(&self, task_id: usize) -> Result<&TaskState> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or(Error::UnknownTask(task_id))
    }

    /// The voter for `task_id` reading the representer grown on
    /// `representer_task_id`, if the task has an omni row.
    pub fn voter(&self, task_id: usize, representer_task_id: usize) -> Option<&Voter> {
        let task = self.task(task_id).ok()?;
        let TaskVoters::Omni { voters } = &task.voters else {
            return None;
        };
        voters
            .iter()
            .find(|v| v.representer_task_id() == representer_task_id)
    }

    /// Total number of voters across all tasks.
    pub fn n_voters(&self) -> usize {
        self.tasks
            .iter()
            .map(|t| match &t.voters {
                TaskVoters::Omni { voters } => voters.len(),
                TaskVoters::Selected { voters } => voters.len(),
            })
            .sum()
    }

    fn check_new_task(&self, data: &TaskDataset) -> Result<()> {
        if let Ok(prev) = self.task(data.task_id()) {
            if prev.class_count != data.class_count() {
                return Err(Error::ClassCountMismatch {
                    task_id: data.task_id(),
                    expected: prev.class_count,
                    got: data.class_count(),
                });
            }
            return Err(Error::DuplicateTask(data.task_id()));
        }
        if let Some(p) = self.n_features {
            if p != data.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: data.n_features(),
                });
            }
        }
        Ok(())
    }

    /// Learns a new task by growing a forest on it.
    ///
    /// The new task's voters cover every representer, its own through
    /// out-of-bag rows. Every earlier task with retained data gains a voter
    /// on the new representer.
    pub fn add_task(
        &mut self,
        data: TaskDataset,
        config: &ForestConfig,
        seed: &SeedStream,
    ) -> Result<()> {
        self.check_new_task(&data)?;
        config.validate()?;
        let (rep, own_voter) = self.grow(&data, config, seed)?;

        let mut row: Vec<Voter> = self
            .representers
            .par_iter()
            .map(|r| self.cross_voter(r, &data))
            .collect::<Result<_>>()?;
        row.push(own_voter);

        let backward = self.backward_voters(&rep)?;
        self.commit(rep, backward);
        self.push_task(data, TaskVoters::Omni { voters: row });
        Ok(())
    }

    /// Learns a new task from existing trees, growing some fresh ones in
    /// hybrid mode.
    ///
    /// Every existing tree is scored by the held-out accuracy of a one-tree
    /// voter fit on part of the new data; the best `trees_per_task` (minus
    /// any grown ones) are kept and their voters refit on all of it.
    pub fn add_task_recruiting(
        &mut self,
        data: TaskDataset,
        config: &ForestConfig,
        seed: &SeedStream,
    ) -> Result<()> {
        let strategy = self.config.strategy.clone();
        if strategy.mode == Strategy::Build {
            return Err(Error::InvalidConfig(
                "recruiting requires strategy mode `recruit` or `hybrid`".into(),
            ));
        }
        if self.config.voter != VoterKind::Leaf {
            return Err(Error::InvalidConfig(
                "recruiting requires leaf voters".into(),
            ));
        }
        self.check_new_task(&data)?;
        config.validate()?;
        if self.representers.is_empty() {
            return Err(Error::NotEnoughTrees {
                needed: 1,
                available: 0,
            });
        }
        let n_build = match strategy.mode {
            Strategy::Hybrid => {
                (strategy.hybrid_build_fraction * strategy.trees_per_task as f64).round() as usize
            }
            _ => 0,
        };
        let n_recruit = strategy.trees_per_task - n_build;
        let candidates: Vec<(usize, usize)> = self
            .representers
            .iter()
            .enumerate()
            .flat_map(|(j, r)| (0..r.n_trees()).map(move |b| (j, b)))
            .collect();
        if candidates.len() < n_recruit {
            return Err(Error::NotEnoughTrees {
                needed: n_recruit,
                available: candidates.len(),
            });
        }

        let mut selected = Vec::new();
        if n_recruit > 0 {
            let (fit_part, eval_part) = split_train_test(
                &data,
                strategy.recruit_eval_fraction,
                &seed.child("selection", 0),
            )?;
            let alpha = self.config.smoothing;
            let scored: Vec<(Reverse<usize>, usize, usize)> = candidates
                .par_iter()
                .map(|&(j, b)| {
                    let rep = &self.representers[j];
                    let v = fit_cross_task_voter_on(rep, vec![b], &fit_part, None, alpha)?;
                    let tree = &rep.trees()[b];
                    let correct = eval_part
                        .rows()
                        .zip(eval_part.labels())
                        .filter(|(x, &y)| argmax(v.leaf_posterior(0, tree.leaf(x))) == y)
                        .count();
                    Ok((Reverse(correct), j, b))
                })
                .collect::<Result<_>>()?;
            let mut scored = scored;
            scored.sort_unstable();
            let mut chosen: Vec<(usize, usize)> = scored[..n_recruit]
                .iter()
                .map(|&(_, j, b)| (j, b))
                .collect();
            chosen.sort_unstable();
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for (j, b) in chosen {
                match groups.last_mut() {
                    Some((gj, trees)) if *gj == j => trees.push(b),
                    _ => groups.push((j, vec![b])),
                }
            }
            selected = groups
                .into_par_iter()
                .map(|(j, trees)| {
                    let voter =
                        fit_cross_task_voter_on(&self.representers[j], trees, &data, None, alpha)?;
                    Ok(SelectedVoter {
                        representer: j,
                        voter,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }

        if n_build > 0 {
            let (rep, own) = self.grow(&data, &config.clone().with_trees(n_build), seed)?;
            let Voter::Leaf(voter) = own else {
                unreachable!("leaf voter kind checked above");
            };
            let backward = self.backward_voters(&rep)?;
            selected.push(SelectedVoter {
                representer: self.representers.len(),
                voter,
            });
            self.commit(rep, backward);
        }
        self.push_task(data, TaskVoters::Selected { voters: selected });
        Ok(())
    }

    /// Grows the task's representer and its in-task voter.
    fn grow(
        &self,
        data: &TaskDataset,
        config: &ForestConfig,
        seed: &SeedStream,
    ) -> Result<(ForestRepresenter, Voter)> {
        match self.config.voter {
            VoterKind::Leaf => {
                let rep = fit_representer(data, config, seed)?;
                let voter =
                    fit_in_task_voter(&rep, data, rep.oob_indices(), self.config.smoothing)?;
                Ok((rep, Voter::Leaf(voter)))
            }
            VoterKind::Knn => {
                let (structure, estimation) =
                    subsample_indices(data.len(), config.max_samples, &seed.child("structure", 0))?;
                let rep = fit_representer_on(data, &structure, config, seed)?;
                let voter = fit_knn_voter(&rep, data, Some(&estimation))?;
                Ok((rep, Voter::Knn(voter)))
            }
        }
    }

    fn cross_voter(&self, rep: &ForestRepresenter, data: &TaskDataset) -> Result<Voter> {
        match self.config.voter {
            VoterKind::Leaf => Ok(Voter::Leaf(fit_cross_task_voter(
                rep,
                data,
                self.config.smoothing,
            )?)),
            VoterKind::Knn => Ok(Voter::Knn(fit_knn_voter(rep, data, None)?)),
        }
    }

    /// Voters on `rep` for every earlier omni task that kept its data.
    fn backward_voters(&self, rep: &ForestRepresenter) -> Result<Vec<(usize, Voter)>> {
        self.tasks
            .par_iter()
            .enumerate()
            .filter_map(|(i, t)| match (&t.voters, &t.retained) {
                (TaskVoters::Omni { .. }, Some(data)) => Some((i, data)),
                _ => None,
            })
            .map(|(i, data)| Ok((i, self.cross_voter(rep, data)?)))
            .collect()
    }

    fn commit(&mut self, rep: ForestRepresenter, backward: Vec<(usize, Voter)>) {
        self.representers.push(rep);
        for (i, voter) in backward {
            if let TaskVoters::Omni { voters } = &mut self.tasks[i].voters {
                voters.push(voter);
            }
        }
    }

    fn push_task(&mut self, data: TaskDataset, voters: TaskVoters) {
        self.n_features = Some(data.n_features());
        let retained = (!self.config.forward_only).then_some(data.clone());
        self.tasks.push(TaskState {
            task_id: data.task_id(),
            class_count: data.class_count(),
            retained,
            voters,
        });
    }

    /// Average posterior over the task's voters.
    pub fn predict_proba(&self, task_id: usize, x: &[f64]) -> Result<Posterior> {
        let task = self.task(task_id)?;
        if let Some(p) = self.n_features {
            if x.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: x.len(),
                });
            }
        }
        let mut acc = vec![0.0; task.class_count];
        match &task.voters {
            TaskVoters::Omni { voters } => {
                for (rep, voter) in self.representers.iter().zip(voters) {
                    let post = voter.vote(&rep.transform(x)?)?;
                    for (a, p) in acc.iter_mut().zip(post.probs()) {
                        *a += p;
                    }
                }
                let t = voters.len() as f64;
                acc.iter_mut().for_each(|a| *a /= t);
            }
            TaskVoters::Selected { voters } => {
                let mut n_trees = 0;
                for sv in voters {
                    let rep = &self.representers[sv.representer];
                    sv.voter.accumulate(&rep.transform(x)?, &mut acc)?;
                    n_trees += sv.voter.trees().len();
                }
                let b = n_trees as f64;
                acc.iter_mut().for_each(|a| *a /= b);
            }
        }
        Ok(Posterior::from_raw(acc))
    }

    /// Most probable class for `x` under task `task_id`; ties go to the
    /// lowest class index.
    pub fn predict(&self, task_id: usize, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(task_id, x)?.argmax())
    }

    /// Structural validation after deserialization.
    pub(crate) fn check(&self) -> Result<()> {
        self.config.validate()?;
        for rep in &self.representers {
            rep.check()?;
            if Some(rep.n_features()) != self.n_features {
                return Err(Error::Corrupt("representer feature count differs".into()));
            }
        }
        for task in &self.tasks {
            match &task.voters {
                TaskVoters::Omni { voters } => {
                    if voters.is_empty() || voters.len() > self.representers.len() {
                        return Err(Error::Corrupt(format!("task {} voter row", task.task_id)));
                    }
                    for (rep, v) in self.representers.iter().zip(voters) {
                        check_voter(rep, v, task)?;
                    }
                }
                TaskVoters::Selected { voters } => {
                    if voters.is_empty() {
                        return Err(Error::Corrupt(format!(
                            "task {} has no voters",
                            task.task_id
                        )));
                    }
                    for sv in voters {
                        let rep = self.representers.get(sv.representer).ok_or_else(|| {
                            Error::Corrupt("voter reads a missing representer".into())
                        })?;
                        check_voter(rep, &Voter::Leaf(sv.voter.clone()), task)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_voter(rep: &ForestRepresenter, voter: &Voter, task: &TaskState) -> Result<()> {
    if voter.target_task_id() != task.task_id || voter.representer_task_id() != rep.source_task_id()
    {
        return Err(Error::Corrupt(format!(
            "task {} voter wiring",
            task.task_id
        )));
    }
    if let Voter::Leaf(v) = voter {
        if v.class_count() != task.class_count {
            return Err(Error::Corrupt(format!(
                "task {} voter class count",
                task.task_id
            )));
        }
        for (pos, &t) in v.trees().iter().enumerate() {
            if rep.trees().get(t).map(|tr| tr.n_leaves()) != Some(v.n_leaves(pos)) {
                return Err(Error::Corrupt(format!(
                    "task {} voter leaf table",
                    task.task_id
                )));
            }
        }
    }
    Ok(())
}
