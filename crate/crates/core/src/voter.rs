//! Posterior estimators over forest representations.
//!
//! A [`LeafVoter`] stores, for every leaf of every tree it reads, the class
//! counts of the rows that landed there and the smoothed posterior derived
//! from them. In-task voters count only each tree's out-of-bag rows; cross-task
//! voters count every row of the target task, which the representer never saw.

use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::forest::ForestRepresenter;

/// Tolerance on the unit-sum check of [`Posterior::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector over the classes of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior(Vec<f64>);

impl Posterior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidData(format!(
                "not a probability vector: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidData(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(class_count: usize) -> Self {
        Self(vec![1.0 / class_count as f64; class_count])
    }

    /// Wraps a vector already known to lie on the simplex.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Which rows of the target data a voter counts.
enum Rows<'a> {
    /// Every row, for every tree.
    All,
    /// Row set per voter tree (out-of-bag rows for in-task voters).
    PerTree(&'a [Vec<usize>]),
    /// The same subset for every tree.
    Subset(&'a [usize]),
}

/// Leaf-indexed posterior tables for one (target task, representer) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LeafVoterRecord", into = "LeafVoterRecord")]
pub struct LeafVoter {
    target_task_id: usize,
    representer_task_id: usize,
    representer_trees: usize,
    trees: Vec<usize>,
    leaf_counts: Vec<usize>,
    class_count: usize,
    smoothing: f64,
    out_of_bag: bool,
    /// Per voter tree, `leaves * class_count` counts, leaf-major.
    counts: Vec<Vec<u32>>,
    /// Same layout as `counts`.
    posteriors: Vec<Vec<f64>>,
}

/// Serialized form: counts only, posteriors are rebuilt on load.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafVoterRecord {
    target_task_id: usize,
    representer_task_id: usize,
    representer_trees: usize,
    trees: Vec<usize>,
    leaf_counts: Vec<usize>,
    class_count: usize,
    smoothing: f64,
    out_of_bag: bool,
    counts: Vec<Vec<u32>>,
}

impl From<LeafVoter> for LeafVoterRecord {
    fn from(v: LeafVoter) -> Self {
        Self {
            target_task_id: v.target_task_id,
            representer_task_id: v.representer_task_id,
            representer_trees: v.representer_trees,
            trees: v.trees,
            leaf_counts: v.leaf_counts,
            class_count: v.class_count,
            smoothing: v.smoothing,
            out_of_bag: v.out_of_bag,
            counts: v.counts,
        }
    }
}

impl TryFrom<LeafVoterRecord> for LeafVoter {
    type Error = Error;

    fn try_from(r: LeafVoterRecord) -> Result<Self> {
        let mut voter = LeafVoter::from_counts(
            r.target_task_id,
            r.representer_task_id,
            r.representer_trees,
            r.trees,
            r.leaf_counts,
            r.class_count,
            r.smoothing,
            r.counts,
        )?;
        voter.out_of_bag = r.out_of_bag;
        Ok(voter)
    }
}

impl LeafVoter {
    /// Builds a voter from raw leaf counts.
    ///
    /// `trees` lists which trees of the representer the voter reads and
    /// `leaf_counts[i]` is the leaf count of tree `trees[i]`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        target_task_id: usize,
        representer_task_id: usize,
        representer_trees: usize,
        trees: Vec<usize>,
        leaf_counts: Vec<usize>,
        class_count: usize,
        smoothing: f64,
        counts: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if trees.is_empty() || trees.len() != leaf_counts.len() || trees.len() != counts.len() {
            return Err(Error::InvalidData("voter table shape mismatch".into()));
        }
        if trees.iter().any(|&t| t >= representer_trees) {
            return Err(Error::InvalidData("voter references a missing tree".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidData("voter needs at least 2 classes".into()));
        }
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing must be a non-negative number, got {smoothing}"
            )));
        }
        for (table, &leaves) in counts.iter().zip(&leaf_counts) {
            if table.len() != leaves * class_count {
                return Err(Error::InvalidData("voter table has wrong length".into()));
            }
        }
        let posteriors = counts
            .iter()
            .map(|table| smoothed_table(table, class_count, smoothing))
            .collect();
        Ok(Self {
            target_task_id,
            representer_task_id,
            representer_trees,
            trees,
            leaf_counts,
            class_count,
            smoothing,
            out_of_bag: false,
            counts,
            posteriors,
        })
    }

    fn fit(
        rep: &ForestRepresenter,
        trees: Vec<usize>,
        data: &TaskDataset,
        rows: Rows<'_>,
        smoothing: f64,
    ) -> Result<Self> {
        let k = data.class_count();
        let labels = data.labels();
        let leaf_counts: Vec<usize> = trees.iter().map(|&t| rep.trees()[t].n_leaves()).collect();
        let mut counts = Vec::with_capacity(trees.len());
        for (pos, &t) in trees.iter().enumerate() {
            let tree = &rep.trees()[t];
            let mut table = vec![0u32; tree.n_leaves() * k];
            let mut add = |i: usize| table[tree.leaf(data.row(i)) * k + labels[i]] += 1;
            match rows {
                Rows::All => (0..data.len()).for_each(&mut add),
                Rows::PerTree(sets) => sets[pos].iter().copied().for_each(&mut add),
                Rows::Subset(subset) => subset.iter().copied().for_each(&mut add),
            }
            counts.push(table);
        }
        Self::from_counts(
            data.task_id(),
            rep.source_task_id(),
            rep.n_trees(),
            trees,
            leaf_counts,
            k,
            smoothing,
            counts,
        )
    }

    pub fn target_task_id(&self) -> usize {
        self.target_task_id
    }

    pub fn representer_task_id(&self) -> usize {
        self.representer_task_id
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Trees of the representer this voter reads.
    pub fn trees(&self) -> &[usize] {
        &self.trees
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Whether the counts came from out-of-bag rows only.
    pub fn is_out_of_bag(&self) -> bool {
        self.out_of_bag
    }

    /// Class counts in leaf `leaf` of the voter's `pos`-th tree.
    pub fn leaf_counts(&self, pos: usize, leaf: usize) -> &[u32] {
        let k = self.class_count;
        &self.counts[pos][leaf * k..(leaf + 1) * k]
    }

    /// Posterior stored for leaf `leaf` of the voter's `pos`-th tree.
    pub fn leaf_posterior(&self, pos: usize, leaf: usize) -> &[f64] {
        let k = self.class_count;
        &self.posteriors[pos][leaf * k..(leaf + 1) * k]
    }

    /// Number of leaves in the voter's `pos`-th tree.
    pub fn n_leaves(&self, pos: usize) -> usize {
        self.leaf_counts[pos]
    }

    /// Adds every read tree's leaf posterior to `acc`.
    pub(crate) fn accumulate(&self, leaf_ids: &[usize], acc: &mut [f64]) -> Result<()> {
        if leaf_ids.len() != self.representer_trees {
            return Err(Error::DimensionMismatch {
                expected: self.representer_trees,
                got: leaf_ids.len(),
            });
        }
        for (pos, &t) in self.trees.iter().enumerate() {
            let leaf = leaf_ids[t];
            if leaf >= self.leaf_counts[pos] {
                return Err(Error::UnknownLeaf {
                    tree: t,
                    leaf,
                    leaves: self.leaf_counts[pos],
                });
            }
            for (a, p) in acc.iter_mut().zip(self.leaf_posterior(pos, leaf)) {
                *a += p;
            }
        }
        Ok(())
    }
}

/// `(c_k + a) / (c + a K)` per leaf; leaves with no rows are uniform.
fn smoothed_table(counts: &[u32], k: usize, alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(counts.len());
    for leaf in counts.chunks_exact(k) {
        let total: u64 = leaf.iter().map(|&c| c as u64).sum();
        if total == 0 {
            out.extend(std::iter::repeat_n(1.0 / k as f64, k));
        } else {
            let denom = total as f64 + alpha * k as f64;
            out.extend(leaf.iter().map(|&c| (c as f64 + alpha) / denom));
        }
    }
    out
}

/// The honest in-task voter: each tree counts only its own out-of-bag rows.
pub fn fit_in_task_voter(
    rep: &ForestRepresenter,
    data: &TaskDataset,
    oob: &[Vec<usize>],
    smoothing: f64,
) -> Result<LeafVoter> {
    if rep.source_task_id() != data.task_id() {
        return Err(Error::TaskMismatch(format!(
            "representer was fit on task {} but data is task {}",
            rep.source_task_id(),
            data.task_id()
        )));
    }
    check_dims(rep, data)?;
    if oob.len() != rep.n_trees() {
        return Err(Error::InvalidData(format!(
            "{} out-of-bag sets for {} trees",
            oob.len(),
            rep.n_trees()
        )));
    }
    if oob.iter().any(Vec::is_empty) {
        return Err(Error::InvalidData(
            "every tree needs out-of-bag rows".into(),
        ));
    }
    if oob.iter().flatten().any(|&i| i >= data.len()) {
        return Err(Error::InvalidData("out-of-bag index out of range".into()));
    }
    let trees = (0..rep.n_trees()).collect();
    let mut voter = LeafVoter::fit(rep, trees, data, Rows::PerTree(oob), smoothing)?;
    voter.out_of_bag = true;
    Ok(voter)
}

/// A voter for another task's data on this representer, counting every row.
pub fn fit_cross_task_voter(
    rep: &ForestRepresenter,
    data: &TaskDataset,
    smoothing: f64,
) -> Result<LeafVoter> {
    let trees = (0..rep.n_trees()).collect();
    fit_cross_task_voter_on(rep, trees, data, None, smoothing)
}

/// Cross-task voter restricted to some trees and, optionally, some rows.
pub fn fit_cross_task_voter_on(
    rep: &ForestRepresenter,
    trees: Vec<usize>,
    data: &TaskDataset,
    rows: Option<&[usize]>,
    smoothing: f64,
) -> Result<LeafVoter> {
    if rep.source_task_id() == data.task_id() {
        return Err(Error::TaskMismatch(format!(
            "task {} is the representer's own task; use the out-of-bag voter",
            data.task_id()
        )));
    }
    check_dims(rep, data)?;
    if trees.iter().any(|&t| t >= rep.n_trees()) {
        return Err(Error::InvalidData("tree index out of range".into()));
    }
    if let Some(rows) = rows {
        if rows.iter().any(|&i| i >= data.len()) {
            return Err(Error::InvalidData("row index out of range".into()));
        }
    }
    let rows = rows.map_or(Rows::All, Rows::Subset);
    LeafVoter::fit(rep, trees, data, rows, smoothing)
}

fn check_dims(rep: &ForestRepresenter, data: &TaskDataset) -> Result<()> {
    if rep.n_features() == data.n_features() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: rep.n_features(),
            got: data.n_features(),
        })
    }
}

/// Mean of the per-tree leaf posteriors.
pub fn vote(voter: &LeafVoter, leaf_ids: &[usize]) -> Result<Posterior> {
    let mut acc = vec![0.0; voter.class_count];
    voter.accumulate(leaf_ids, &mut acc)?;
    let b = voter.trees.len() as f64;
    acc.iter_mut().for_each(|a| *a /= b);
    Ok(Posterior::from_raw(acc))
}

/// `k = max(1, round(16 log2 n))`, clamped to `n`.
pub fn knn_k(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (16.0 * (n as f64).log2()).round().max(1.0) as usize;
    k.min(n)
}

/// k-nearest-neighbour voter on the concatenated one-hot representation.
///
/// Two representations differ by `sqrt(2 m)` in Euclidean distance when
/// they disagree on `m` trees, so neighbours are ranked by `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnVoter {
    target_task_id: usize,
    representer_task_id: usize,
    n_trees: usize,
    class_count: usize,
    k: usize,
    /// Row-major `n * n_trees` leaf ids.
    points: Vec<usize>,
    labels: Vec<usize>,
}

impl KnnVoter {
    /// Stores already-transformed points. `k` follows [`knn_k`].
    pub fn from_points(
        target_task_id: usize,
        representer_task_id: usize,
        n_trees: usize,
        class_count: usize,
        points: Vec<Vec<usize>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyVoter);
        }
        if points.len() != labels.len() || points.iter().any(|p| p.len() != n_trees) {
            return Err(Error::InvalidData("k-NN points and labels disagree".into()));
        }
        if labels.iter().any(|&l| l >= class_count) {
            return Err(Error::InvalidData("k-NN label out of range".into()));
        }
        Ok(Self {
            target_task_id,
            representer_task_id,
            n_trees,
            class_count,
            k: knn_k(points.len()),
            points: points.into_iter().flatten().collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn target_task_id(&self) -> usize {
        self.target_task_id
    }

    pub fn representer_task_id(&self) -> usize {
        self.representer_task_id
    }
}

/// Fits a k-NN voter on `rows` of `data` (all rows when `None`) pushed
/// through `rep`.
pub fn fit_knn_voter(
    rep: &ForestRepresenter,
    data: &TaskDataset,
    rows: Option<&[usize]>,
) -> Result<KnnVoter> {
    check_dims(rep, data)?;
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for &i in rows {
        if i >= data.len() {
            return Err(Error::InvalidData("row index out of range".into()));
        }
        points.push(rep.transform(data.row(i))?);
        labels.push(data.labels()[i]);
    }
    KnnVoter::from_points(
        data.task_id(),
        rep.source_task_id(),
        rep.n_trees(),
        data.class_count(),
        points,
        labels,
    )
}

/// Class frequencies among the `k` stored points nearest to `leaf_ids`.
/// Equal distances are resolved in favour of the earlier stored point.
pub fn knn_vote(voter: &KnnVoter, leaf_ids: &[usize]) -> Result<Posterior> {
    if voter.is_empty() {
        return Err(Error::EmptyVoter);
    }
    if leaf_ids.len() != voter.n_trees {
        return Err(Error::DimensionMismatch {
            expected: voter.n_trees,
            got: leaf_ids.len(),
        });
    }
    let mut dist: Vec<(usize, usize)> = voter
        .points
        .chunks_exact(voter.n_trees)
        .enumerate()
        .map(|(i, p)| (p.iter().zip(leaf_ids).filter(|(a, b)| a != b).count(), i))
        .collect();
    dist.sort_unstable();
    let mut acc = vec![0.0; voter.class_count];
    for &(_, i) in &dist[..voter.k] {
        acc[voter.labels[i]] += 1.0;
    }
    let k = voter.k as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(Posterior::from_raw(acc))
}

/// A voter of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Voter {
    Leaf(LeafVoter),
    Knn(KnnVoter),
}

impl Voter {
    pub fn vote(&self, leaf_ids: &[usize]) -> Result<Posterior> {
        match self {
            Voter::Leaf(v) => vote(v, leaf_ids),
            Voter::Knn(v) => knn_vote(v, leaf_ids),
        }
    }

    pub fn target_task_id(&self) -> usize {
        match self {
            Voter::Leaf(v) => v.target_task_id(),
            Voter::Knn(v) => v.target_task_id(),
        }
    }

    pub fn representer_task_id(&self) -> usize {
        match self {
            Voter::Leaf(v) => v.representer_task_id(),
            Voter::Knn(v) => v.representer_task_id(),
        }
    }

    pub fn as_leaf(&self) -> Option<&LeafVoter> {
        match self {
            Voter::Leaf(v) => Some(v),
            Voter::Knn(_) => None,
        }
    }
}
