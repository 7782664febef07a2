//! Library results checked against independent, deliberately naive
//! re-implementations.

use omniforest::forest::best_split;
use omniforest::metrics::{log_ratio, spearman};
use omniforest::voter::{fit_in_task_voter, fit_knn_voter, knn_k, knn_vote};
use omniforest::{
    fit_representer, generate_xor, rotate_features, subsample_indices, ForestConfig,
    ForestRepresenter, HonestForestClassifier, LearnerConfig, OmniLearner, SeedStream,
    SplitCriterion, TaskDataset, TaskTransfer, TreeNode, Voter, XorSpec,
};

fn xor(n: usize, seed: u64, task_id: usize, angle: f64, flip: bool) -> TaskDataset {
    generate_xor(&XorSpec {
        n,
        angle_degrees: angle,
        label_flip: flip,
        seed,
        task_id,
        ..XorSpec::default()
    })
    .unwrap()
}

/// Recursive descent over the node arena.
fn descend(nodes: &[TreeNode], i: usize, x: &[f64]) -> usize {
    match &nodes[i] {
        TreeNode::Leaf { leaf_id } => *leaf_id,
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            if x[*feature] < *threshold {
                descend(nodes, *left, x)
            } else {
                descend(nodes, *right, x)
            }
        }
    }
}

/// Per-leaf out-of-bag class counts and totals, per tree.
fn brute_force_oob(rep: &ForestRepresenter, data: &TaskDataset) -> Vec<Vec<(Vec<u32>, u32)>> {
    let k = data.class_count();
    rep.trees()
        .iter()
        .zip(rep.oob_indices())
        .map(|(tree, oob)| {
            let mut counts = vec![vec![0u32; k]; tree.n_leaves()];
            for &i in oob {
                let leaf = descend(tree.nodes(), 0, data.row(i));
                counts[leaf][data.labels()[i]] += 1;
            }
            counts
                .into_iter()
                .map(|c| {
                    let total = c.iter().sum();
                    (c, total)
                })
                .collect()
        })
        .collect()
}

#[test]
fn in_task_voter_at_zero_smoothing_equals_oob_frequencies() {
    let data = xor(300, 11, 0, 0.0, false);
    let rep = fit_representer(&data, &ForestConfig::default(), &SeedStream::new(5)).unwrap();
    let voter = fit_in_task_voter(&rep, &data, rep.oob_indices(), 0.0).unwrap();
    let oracle = brute_force_oob(&rep, &data);
    let k = data.class_count();
    for (pos, tree_counts) in oracle.iter().enumerate() {
        assert_eq!(voter.n_leaves(pos), tree_counts.len());
        for (leaf, (cells, total)) in tree_counts.iter().enumerate() {
            let post = voter.leaf_posterior(pos, leaf);
            assert_eq!(voter.leaf_counts(pos, leaf), cells.as_slice());
            for c in 0..k {
                let expected = if *total == 0 {
                    1.0 / k as f64
                } else {
                    cells[c] as f64 / *total as f64
                };
                assert_eq!(post[c], expected, "tree {pos} leaf {leaf} class {c}");
            }
        }
    }
}

#[test]
fn transform_matches_recursive_descent() {
    let data = xor(200, 3, 0, 30.0, false);
    let rep = fit_representer(&data, &ForestConfig::default(), &SeedStream::new(9)).unwrap();
    let probe = xor(1000, 99, 0, 0.0, false);
    for x in probe.rows() {
        let ids = rep.transform(x).unwrap();
        let oracle: Vec<usize> = rep
            .trees()
            .iter()
            .map(|t| descend(t.nodes(), 0, x))
            .collect();
        assert_eq!(ids, oracle);
        let enc = rep.encode(x).unwrap();
        let mut offset = 0;
        for (b, t) in rep.trees().iter().enumerate() {
            assert_eq!(enc[b], offset + oracle[b]);
            offset += t.n_leaves();
        }
    }
}

/// For each voter, average its trees' leaf posteriors;
/// then average over voters.
fn predict_proba_loop(learner: &OmniLearner, task: usize, x: &[f64]) -> Vec<f64> {
    let state = learner.task(task).unwrap();
    let voters = match state.voters() {
        omniforest::TaskVoters::Omni { voters } => voters,
        _ => unreachable!(),
    };
    let k = state.class_count();
    let mut out = vec![0.0; k];
    for (rep, voter) in learner.representers().iter().zip(voters) {
        let Voter::Leaf(v) = voter else {
            unreachable!()
        };
        let mut per = vec![0.0; k];
        for (pos, &b) in v.trees().iter().enumerate() {
            let leaf = descend(rep.trees()[b].nodes(), 0, x);
            let counts = v.leaf_counts(pos, leaf);
            let total: f64 = counts.iter().map(|&c| c as f64).sum();
            for c in 0..k {
                per[c] += if total == 0.0 {
                    1.0 / k as f64
                } else {
                    (counts[c] as f64 + v.smoothing()) / (total + v.smoothing() * k as f64)
                };
            }
        }
        for c in 0..k {
            out[c] += per[c] / v.trees().len() as f64;
        }
    }
    out.iter().map(|p| p / voters.len() as f64).collect()
}

#[test]
fn predict_proba_matches_independent_loop() {
    for smoothing in [0.0, 1.0, 0.3] {
        let mut learner = OmniLearner::new(LearnerConfig {
            smoothing,
            ..LearnerConfig::default()
        })
        .unwrap();
        for t in 0..3 {
            let data = xor(150, 20 + t as u64, t, 30.0 * t as f64, t == 1);
            learner
                .add_task(data, &ForestConfig::default(), &SeedStream::new(t as u64))
                .unwrap();
        }
        let probe = xor(500, 7, 0, 10.0, false);
        for t in 0..3 {
            for x in probe.rows() {
                let got = learner.predict_proba(t, x).unwrap();
                let want = predict_proba_loop(&learner, t, x);
                for (g, w) in got.probs().iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
                }
                let argmax = (0..want.len()).fold(0, |b, c| if want[c] > want[b] { c } else { b });
                assert_eq!(learner.predict(t, x).unwrap(), argmax);
            }
        }
    }
}

fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    1.0 - counts
        .iter()
        .map(|&c| (c as f64 / n as f64).powi(2))
        .sum::<f64>()
}

/// Every midpoint of every feature, scored from scratch.
fn brute_force_split(rows: &[usize], data: &TaskDataset) -> Option<(usize, f64, f64)> {
    let k = data.class_count();
    let hist = |set: &[usize]| {
        let mut h = vec![0; k];
        set.iter().for_each(|&i| h[data.labels()[i]] += 1);
        h
    };
    let parent = gini(&hist(rows));
    let n = rows.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..data.n_features() {
        let mut values: Vec<f64> = rows.iter().map(|&i| data.row(i)[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| data.row(i)[f] < thr);
            let child = (l.len() as f64 * gini(&hist(&l)) + r.len() as f64 * gini(&hist(&r))) / n;
            let gain = parent - child;
            if best.is_none_or(|(_, _, g)| gain > g + 1e-12) {
                best = Some((f, thr, gain));
            }
        }
    }
    best.filter(|b| b.2 > 1e-12)
}

#[test]
fn best_split_matches_exhaustive_search() {
    for seed in 0..20 {
        let data = xor(40, seed, 0, 17.0 * seed as f64, false);
        let rows: Vec<usize> = (0..data.len()).filter(|i| i % 3 != 0).collect();
        let got = best_split(&rows, &data, SplitCriterion::Gini);
        let want = brute_force_split(&rows, &data);
        match (got, want) {
            (None, None) => {}
            (Some(s), Some((f, thr, gain))) => {
                assert!((s.impurity_decrease - gain).abs() < 1e-9, "seed {seed}");
                assert_eq!(s.feature, f, "seed {seed}");
                assert!((s.threshold - thr).abs() < 1e-12, "seed {seed}");
            }
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn exact_xor_has_no_improving_split_but_is_still_separated() {
    let corners = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let labels = [0, 1, 1, 0];
    let data = TaskDataset::from_rows(
        &corners.iter().map(|c| c.to_vec()).collect::<Vec<_>>(),
        labels.to_vec(),
        0,
        2,
    )
    .unwrap();
    // Both axes leave each half at one of each class: Gini 0.5 before and after.
    assert!(best_split(&[0, 1, 2, 3], &data, SplitCriterion::Gini).is_none());

    let rows: Vec<Vec<f64>> = (0..12).map(|i| corners[i % 4].to_vec()).collect();
    let labels: Vec<usize> = (0..12).map(|i| labels[i % 4]).collect();
    let data = TaskDataset::from_rows(&rows, labels, 0, 2).unwrap();
    let clf =
        HonestForestClassifier::fit(&data, &ForestConfig::default(), 0.0, &SeedStream::new(1))
            .unwrap();
    assert!(clf.representer().trees().iter().all(|t| t.n_leaves() >= 4));
    for (c, l) in corners.iter().zip([0, 1, 1, 0]) {
        assert_eq!(clf.predict(c).unwrap(), l);
    }
}

#[test]
fn subsample_sizes() {
    let (a, b) = subsample_indices(100, 0.67, &SeedStream::new(0)).unwrap();
    assert_eq!((a.len(), b.len()), (67, 33));
    let (a, b) = subsample_indices(3, 0.34, &SeedStream::new(0)).unwrap();
    assert_eq!((a.len(), b.len()), (1, 2));
}

#[test]
fn knn_k_is_clamped_to_the_sample() {
    assert_eq!(knn_k(4), 4);
    assert_eq!(knn_k(1024), 160);
    assert_eq!(knn_k(1), 1);

    // With k clamped to n, every query sees global class frequencies.
    let data = TaskDataset::from_rows(
        &[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ],
        vec![0, 1, 1, 1],
        1,
        2,
    )
    .unwrap();
    let source = xor(100, 4, 0, 0.0, false);
    let rep = fit_representer(&source, &ForestConfig::default(), &SeedStream::new(2)).unwrap();
    let voter = fit_knn_voter(&rep, &data, None).unwrap();
    assert_eq!(voter.k(), 4);
    for x in source.rows().take(50) {
        let post = knn_vote(&voter, &rep.transform(x).unwrap()).unwrap();
        assert_eq!(post.probs(), &[0.25, 0.75]);
    }
}

#[test]
fn transfer_hand_values() {
    let t = TaskTransfer::from_means(0, 0.2, 0.15, 0.1);
    assert!((t.te.unwrap() - 2.0).abs() < 1e-15);
    assert!((t.fte.unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert!((t.bte.unwrap() - 1.5).abs() < 1e-15);
    assert!(t.residual().unwrap() <= 1e-12);

    let single = TaskTransfer::from_means(0, 0.3, 0.3, 0.3);
    assert_eq!(
        (single.te, single.fte, single.bte),
        (Some(1.0), Some(1.0), Some(1.0))
    );
    assert_eq!(log_ratio(single.te), Some(0.0));
}

#[test]
fn spearman_on_hand_ranks() {
    assert!(
        (spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12
    );
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    // d = (1, -1, 0, 0): 1 - 6*2 / (4*15) = 0.8.
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 3.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn rotated_generator_equals_post_rotation() {
    for seed in 0..5 {
        let direct = xor(400, seed, 0, 45.0, false);
        let post = rotate_features(&xor(400, seed, 0, 0.0, false), 45.0).unwrap();
        assert_eq!(direct.labels(), post.labels());
        for (a, b) in direct.features().iter().zip(post.features()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn xnor_through_an_xor_forest_flips_leaf_votes() {
    // Same draws, flipped labels: the cross-task table is the class swap
    // of the same-data table.
    let base = xor(300, 8, 0, 0.0, false);
    let flipped = xor(300, 8, 1, 0.0, true);
    let other = base.clone().with_task_id(2);
    let rep = fit_representer(&base, &ForestConfig::default(), &SeedStream::new(3)).unwrap();
    let a = omniforest::voter::fit_cross_task_voter(&rep, &other, 0.0).unwrap();
    let b = omniforest::voter::fit_cross_task_voter(&rep, &flipped, 0.0).unwrap();
    for pos in 0..rep.n_trees() {
        for leaf in 0..a.n_leaves(pos) {
            let (ca, cb) = (a.leaf_counts(pos, leaf), b.leaf_counts(pos, leaf));
            assert_eq!((ca[0], ca[1]), (cb[1], cb[0]));
        }
    }
}
