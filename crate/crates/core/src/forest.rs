//! Decision-forest representers.
//!
//! A fitted tree maps an input to the identifier of the leaf it falls in;
//! a forest of `B` trees maps an input to `B` leaf identifiers, i.e. a
//! `B`-sparse one-hot vector of length `sum(L_b)`. Each tree is grown on
//! its own subsample and remembers which rows it did not see, so posterior
//! estimates can be made on data disjoint from the partition.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap_indices, subsample_indices, SeedStream, TaskDataset};
use crate::error::{Error, Result};

/// Gains at or below this are treated as no improvement.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    Gini,
    Entropy,
}

/// Hyperparameters for growing a forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    /// Number of trees `B`.
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Fraction of rows each tree is grown on.
    pub max_samples: f64,
    pub min_samples_leaf: usize,
    pub criterion: SplitCriterion,
    /// Features examined per node; `None` examines all of them.
    pub max_features: Option<usize>,
    /// Draw in-bag rows with replacement instead of subsampling.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 10,
            max_depth: 30,
            max_samples: 0.67,
            min_samples_leaf: 1,
            criterion: SplitCriterion::Gini,
            max_features: None,
            bootstrap: false,
        }
    }
}

impl ForestConfig {
    pub fn with_trees(mut self, n_estimators: usize) -> Self {
        self.n_estimators = n_estimators;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1".into());
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1".into());
        }
        if !(self.max_samples > 0.0 && self.max_samples < 1.0) {
            return bad(format!(
                "max_samples must lie in (0, 1), got {}",
                self.max_samples
            ));
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if self.max_features == Some(0) {
            return bad("max_features must be at least 1".into());
        }
        Ok(())
    }
}

/// One node of a tree, stored in a flat arena. Children are arena indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left, all others go right.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    n_leaves: usize,
}

impl Tree {
    /// A tree with a single leaf.
    pub fn stump() -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { leaf_id: 0 }],
            n_leaves: 1,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// Leaf containing `x`. `x` must have at least as many entries as the
    /// largest feature index used by the tree.
    #[inline]
    pub fn leaf(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                TreeNode::Leaf { leaf_id } => return leaf_id,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[feature] < threshold { left } else { right },
            }
        }
    }

    /// Depth of the deepest leaf (a stump has depth 0).
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn check(&self) -> Result<()> {
        let mut seen = vec![false; self.n_leaves];
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = self
                .nodes
                .get(i)
                .ok_or_else(|| Error::Corrupt(format!("tree references missing node {i}")))?;
            if std::mem::replace(&mut reached[i], true) {
                return Err(Error::Corrupt(format!("tree node {i} reached twice")));
            }
            match *node {
                TreeNode::Leaf { leaf_id } => {
                    if leaf_id >= self.n_leaves || std::mem::replace(&mut seen[leaf_id], true) {
                        return Err(Error::Corrupt(format!("bad leaf id {leaf_id}")));
                    }
                }
                TreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(Error::Corrupt("tree leaves are not numbered 0..L".into()))
        }
    }
}

/// A fitted forest together with each tree's out-of-bag rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRepresenter {
    trees: Vec<Tree>,
    oob_indices: Vec<Vec<usize>>,
    source_task_id: usize,
    n_features: usize,
}

impl ForestRepresenter {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Out-of-bag row indices of each tree, into the training dataset.
    pub fn oob_indices(&self) -> &[Vec<usize>] {
        &self.oob_indices
    }

    pub fn source_task_id(&self) -> usize {
        self.source_task_id
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Length of the concatenated one-hot representation.
    pub fn representation_dim(&self) -> usize {
        self.trees.iter().map(Tree::n_leaves).sum()
    }

    /// Leaf id of `x` in every tree.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| t.leaf(x)).collect())
    }

    /// Positions of the non-zero entries of the one-hot representation.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        let mut offset = 0;
        Ok(self
            .trees
            .iter()
            .map(|t| {
                let pos = offset + t.leaf(x);
                offset += t.n_leaves();
                pos
            })
            .collect())
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.n_features {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            })
        }
    }

    /// Structural validation after deserialization.
    pub(crate) fn check(&self) -> Result<()> {
        if self.trees.is_empty() || self.trees.len() != self.oob_indices.len() {
            return Err(Error::Corrupt(
                "forest tree/out-of-bag counts disagree".into(),
            ));
        }
        for t in &self.trees {
            t.check()?;
            for node in &t.nodes {
                if let TreeNode::Internal { feature, .. } = node {
                    if *feature >= self.n_features {
                        return Err(Error::Corrupt(format!("feature {feature} out of range")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grows a forest on `data`; tree `b` uses the seed `seed.child("tree", b)`.
pub fn fit_representer(
    data: &TaskDataset,
    config: &ForestConfig,
    seed: &SeedStream,
) -> Result<ForestRepresenter> {
    let all: Vec<usize> = (0..data.len()).collect();
    fit_representer_on(data, &all, config, seed)
}

/// Grows a forest using only the rows listed in `pool`. Out-of-bag indices
/// refer to rows of `data` and are drawn from `pool`.
pub fn fit_representer_on(
    data: &TaskDataset,
    pool: &[usize],
    config: &ForestConfig,
    seed: &SeedStream,
) -> Result<ForestRepresenter> {
    config.validate()?;
    if pool.len() < 2 * config.min_samples_leaf || pool.len() < 2 {
        return Err(Error::TooSmall(format!(
            "{} rows cannot be grown with min_samples_leaf {}",
            pool.len(),
            config.min_samples_leaf
        )));
    }
    let fitted: Vec<(Tree, Vec<usize>)> = (0..config.n_estimators)
        .into_par_iter()
        .map(|b| {
            let tree_seed = seed.child("tree", b as u64);
            let sample_seed = tree_seed.child("sample", 0);
            let (in_bag, oob) = if config.bootstrap {
                bootstrap_indices(pool.len(), config.max_samples, &sample_seed)?
            } else {
                subsample_indices(pool.len(), config.max_samples, &sample_seed)?
            };
            let mut rows: Vec<usize> = in_bag.iter().map(|&i| pool[i]).collect();
            let oob: Vec<usize> = oob.iter().map(|&i| pool[i]).collect();
            let rng = config
                .max_features
                .filter(|&m| m < data.n_features())
                .map(|_| tree_seed.child("features", 0).rng());
            let tree = Grower::new(data, config, rng).grow(&mut rows);
            Ok((tree, oob))
        })
        .collect::<Result<_>>()?;
    let (trees, oob_indices) = fitted.into_iter().unzip();
    Ok(ForestRepresenter {
        trees,
        oob_indices,
        source_task_id: data.task_id(),
        n_features: data.n_features(),
    })
}

/// A candidate axis-aligned split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// The split of `rows` with the largest impurity decrease, or `None` when
/// no split strictly decreases impurity.
///
/// Thresholds are midpoints between adjacent distinct values. Ties go to the
/// lowest feature index, then the lowest threshold.
pub fn best_split(rows: &[usize], data: &TaskDataset, criterion: SplitCriterion) -> Option<Split> {
    let features: Vec<usize> = (0..data.n_features()).collect();
    let mut scratch = Vec::new();
    best_candidate(rows, data, criterion, &features, 1, &mut scratch)
        .filter(|s| s.impurity_decrease > GAIN_EPS)
}

/// Like [`best_split`] but also returns zero-gain candidates.
fn best_candidate(
    rows: &[usize],
    data: &TaskDataset,
    criterion: SplitCriterion,
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Option<Split> {
    let k = data.class_count();
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let labels = data.labels();
    let mut parent = vec![0u64; k];
    for &r in rows {
        parent[labels[r]] += 1;
    }
    let parent_score = node_score(criterion, &parent, n);
    let mut best: Option<Split> = None;
    let mut left = vec![0u64; k];
    let mut right = vec![0u64; k];
    for &f in features {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (data.row(r)[f], labels[r])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        let mut sq_left = 0u64;
        let mut sq_right: u64 = parent.iter().map(|c| c * c).sum();
        for i in 0..n - 1 {
            let (v, y) = scratch[i];
            sq_left += 2 * left[y] + 1;
            sq_right -= 2 * right[y] - 1;
            left[y] += 1;
            right[y] -= 1;
            let next = scratch[i + 1].0;
            let n_left = i + 1;
            if v >= next || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let decrease = match criterion {
                SplitCriterion::Gini => {
                    let nl = n_left as f64;
                    let nr = (n - n_left) as f64;
                    let purity = sq_left as f64 / nl + sq_right as f64 / nr;
                    (purity - parent_score) / n as f64
                }
                SplitCriterion::Entropy => {
                    let nl = n_left as f64;
                    let nr = (n - n_left) as f64;
                    let child = nl * entropy(&left, n_left) + nr * entropy(&right, n - n_left);
                    parent_score - child / n as f64
                }
            };
            if best.is_none_or(|b| decrease > b.impurity_decrease + GAIN_EPS) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(v, next),
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

/// The per-node quantity split gains are measured against. For Gini this is
/// `sum(c_k^2) / n`, which keeps the arithmetic on exact integers up to the
/// final division.
fn node_score(criterion: SplitCriterion, counts: &[u64], n: usize) -> f64 {
    match criterion {
        SplitCriterion::Gini => counts.iter().map(|c| c * c).sum::<u64>() as f64 / n as f64,
        SplitCriterion::Entropy => entropy(counts, n),
    }
}

fn entropy(counts: &[u64], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// A threshold `t` with `lo < t <= hi`, so `lo` routes left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

struct Grower<'a> {
    data: &'a TaskDataset,
    config: &'a ForestConfig,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<TreeNode>,
    n_leaves: usize,
    scratch: Vec<(f64, usize)>,
}

impl<'a> Grower<'a> {
    fn new(data: &'a TaskDataset, config: &'a ForestConfig, rng: Option<ChaCha8Rng>) -> Self {
        Self {
            data,
            config,
            rng,
            nodes: Vec::new(),
            n_leaves: 0,
            scratch: Vec::new(),
        }
    }

    fn grow(mut self, rows: &mut [usize]) -> Tree {
        self.node(rows, 0);
        Tree {
            nodes: self.nodes,
            n_leaves: self.n_leaves,
        }
    }

    fn leaf(&mut self, slot: usize) -> usize {
        self.nodes[slot] = TreeNode::Leaf {
            leaf_id: self.n_leaves,
        };
        self.n_leaves += 1;
        slot
    }

    fn node(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            leaf_id: usize::MAX,
        });
        let labels = self.data.labels();
        let pure = rows.iter().all(|&r| labels[r] == labels[rows[0]]);
        if pure || depth >= self.config.max_depth || rows.len() < 2 * self.config.min_samples_leaf {
            return self.leaf(slot);
        }
        let features = self.features();
        let split = best_candidate(
            rows,
            self.data,
            self.config.criterion,
            &features,
            self.config.min_samples_leaf,
            &mut self.scratch,
        );
        let Some(split) = split else {
            return self.leaf(slot);
        };
        let mid = partition(rows, |r| self.data.row(r)[split.feature] < split.threshold);
        let (l_rows, r_rows) = rows.split_at_mut(mid);
        let left = self.node(l_rows, depth + 1);
        let right = self.node(r_rows, depth + 1);
        self.nodes[slot] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }

    fn features(&mut self) -> Vec<usize> {
        let p = self.data.n_features();
        match (&mut self.rng, self.config.max_features) {
            (Some(rng), Some(m)) if m < p => {
                let mut f = index::sample(rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }
}

/// Stable in-place partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let mid = yes.len();
    rows[..mid].copy_from_slice(&yes);
    rows[mid..].copy_from_slice(&no);
    mid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: &[[f64; 2]], labels: &[usize]) -> TaskDataset {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TaskDataset::from_rows(&rows, labels.to_vec(), 0, 2).unwrap()
    }

    fn one_d(xs: &[f64], labels: &[usize]) -> TaskDataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        TaskDataset::from_rows(&rows, labels.to_vec(), 0, 2).unwrap()
    }

    #[test]
    fn midpoint_of_single_gap() {
        let d = one_d(&[0.0, 1.0], &[0, 1]);
        let s = best_split(&[0, 1], &d, SplitCriterion::Gini).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_have_no_split() {
        let d = dataset(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]], &[0, 1, 0]);
        assert!(best_split(&[0, 1, 2], &d, SplitCriterion::Gini).is_none());
        assert!(best_split(&[0, 1, 2], &d, SplitCriterion::Entropy).is_none());
    }

    #[test]
    fn xor_has_zero_gain_but_still_splits() {
        // Gini at the root is 0.5; every axis split leaves two children
        // with one point of each class, also 0.5, so the decrease is 0.
        let d = dataset(
            &[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]],
            &[0, 0, 1, 1],
        );
        assert!(best_split(&[0, 1, 2, 3], &d, SplitCriterion::Gini).is_none());
        let mut scratch = Vec::new();
        let c = best_candidate(
            &[0, 1, 2, 3],
            &d,
            SplitCriterion::Gini,
            &[0, 1],
            1,
            &mut scratch,
        )
        .unwrap();
        assert_eq!((c.feature, c.threshold), (0, 0.5));
        assert!(c.impurity_decrease.abs() < 1e-15);

        let config = ForestConfig {
            n_estimators: 1,
            max_depth: 2,
            ..ForestConfig::default()
        };
        let all = [0usize, 1, 2, 3];
        let tree = Grower::new(&d, &config, None).grow(&mut all.clone());
        assert_eq!(tree.n_leaves(), 4);
        let leaves: Vec<usize> = (0..4).map(|i| tree.leaf(d.row(i))).collect();
        let mut sorted = leaves.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        // Both features separate the classes perfectly.
        let d = dataset(&[[0.0, 0.0], [1.0, 1.0]], &[0, 1]);
        let s = best_split(&[0, 1], &d, SplitCriterion::Gini).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn boundary_routes_right() {
        let d = one_d(&[0.0, 1.0], &[0, 1]);
        let config = ForestConfig::default();
        let tree = Grower::new(&d, &config, None).grow(&mut [0, 1]);
        assert_eq!(tree.leaf(&[0.5]), tree.leaf(&[1.0]));
        assert_ne!(tree.leaf(&[0.4999]), tree.leaf(&[0.5]));
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo < t && t <= hi);
    }

    #[test]
    fn pure_data_gives_stumps() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, (i * 7 % 5) as f64])
            .collect();
        let d = TaskDataset::from_rows(&rows, vec![1; 20], 0, 2).unwrap();
        let rep = fit_representer(&d, &ForestConfig::default(), &SeedStream::new(0)).unwrap();
        assert!(rep.trees().iter().all(|t| t.n_leaves() == 1));
        assert_eq!(rep.transform(&[3.0, 1.0]).unwrap(), vec![0; 10]);
    }

    #[test]
    fn identical_rows_give_stumps() {
        let rows = vec![vec![0.5, 0.5]; 10];
        let labels = (0..10).map(|i| i % 2).collect();
        let d = TaskDataset::from_rows(&rows, labels, 0, 2).unwrap();
        let rep = fit_representer(&d, &ForestConfig::default(), &SeedStream::new(0)).unwrap();
        assert!(rep.trees().iter().all(|t| t.n_leaves() == 1));
    }

    #[test]
    fn respects_depth_and_min_leaf() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let labels = (0..64).map(|i| i % 2).collect();
        let d = TaskDataset::from_rows(&rows, labels, 0, 2).unwrap();
        let config = ForestConfig {
            max_depth: 3,
            n_estimators: 3,
            ..ForestConfig::default()
        };
        let rep = fit_representer(&d, &config, &SeedStream::new(5)).unwrap();
        assert!(rep
            .trees()
            .iter()
            .all(|t| t.depth() <= 3 && t.n_leaves() <= 8));

        let config = ForestConfig {
            min_samples_leaf: 5,
            n_estimators: 3,
            ..ForestConfig::default()
        };
        let rep = fit_representer(&d, &config, &SeedStream::new(5)).unwrap();
        for (tree, oob) in rep.trees().iter().zip(rep.oob_indices()) {
            let in_bag: Vec<usize> = (0..64).filter(|i| !oob.contains(i)).collect();
            let mut per_leaf = vec![0; tree.n_leaves()];
            for i in in_bag {
                per_leaf[tree.leaf(d.row(i))] += 1;
            }
            assert!(per_leaf.iter().all(|&c| c >= 5), "{per_leaf:?}");
        }
    }

    #[test]
    fn rejects_bad_config_and_dimension() {
        let d = one_d(&[0.0, 1.0, 2.0], &[0, 1, 0]);
        let s = SeedStream::new(0);
        for bad in [
            ForestConfig {
                n_estimators: 0,
                ..Default::default()
            },
            ForestConfig {
                max_depth: 0,
                ..Default::default()
            },
            ForestConfig {
                max_samples: 1.0,
                ..Default::default()
            },
            ForestConfig {
                min_samples_leaf: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                fit_representer(&d, &bad, &s),
                Err(Error::InvalidConfig(_))
            ));
        }
        let rep = fit_representer(&d, &ForestConfig::default(), &s).unwrap();
        assert!(matches!(
            rep.transform(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn feature_subsampling_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i % 7) as f64, (i % 3) as f64, (i % 11) as f64])
            .collect();
        let labels = (0..50).map(|i| (i / 3) % 2).collect();
        let d = TaskDataset::from_rows(&rows, labels, 0, 2).unwrap();
        let config = ForestConfig {
            max_features: Some(1),
            ..Default::default()
        };
        let a = fit_representer(&d, &config, &SeedStream::new(9)).unwrap();
        let b = fit_representer(&d, &config, &SeedStream::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
