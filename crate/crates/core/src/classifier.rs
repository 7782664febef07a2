//! Single-task honest forest: one representer and its out-of-bag voter.

use serde::{Deserialize, Serialize};

use crate::data::{SeedStream, TaskDataset};
use crate::error::Result;
use crate::forest::{fit_representer, ForestConfig, ForestRepresenter};
use crate::voter::{fit_in_task_voter, vote, LeafVoter, Posterior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestForestClassifier {
    representer: ForestRepresenter,
    voter: LeafVoter,
}

impl HonestForestClassifier {
    pub fn fit(
        data: &TaskDataset,
        config: &ForestConfig,
        smoothing: f64,
        seed: &SeedStream,
    ) -> Result<Self> {
        let representer = fit_representer(data, config, seed)?;
        let voter = fit_in_task_voter(&representer, data, representer.oob_indices(), smoothing)?;
        Ok(Self { representer, voter })
    }

    pub fn representer(&self) -> &ForestRepresenter {
        &self.representer
    }

    pub fn voter(&self) -> &LeafVoter {
        &self.voter
    }

    pub fn class_count(&self) -> usize {
        self.voter.class_count()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Posterior> {
        vote(&self.voter, &self.representer.transform(x)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(x)?.argmax())
    }
}
