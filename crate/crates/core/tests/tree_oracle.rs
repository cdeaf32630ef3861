mod common;

use common::{brute_force_split, ols_coefficients, ols_rss, split_fixture};
use proptest::prelude::*;
use railfare::tree::{best_split, cube_root_ceil, grow_tree, split_sse, ModelTree, Node, TrainingFrame, TreeConfig};
use std::collections::BTreeMap;

fn config(leaf: &[&str], candidates: &[String]) -> TreeConfig {
    TreeConfig {
        leaf_regressors: leaf.iter().map(|s| s.to_string()).collect(),
        split_candidates: candidates.to_vec(),
        max_splits: None,
        min_leaf_size: None,
        improvement_tolerance: 1e-9,
    }
}

/// y = x for w < 0 and y = 3x for w >= 0.
fn two_regime(n: usize) -> TrainingFrame {
    let w: Vec<f64> = (0..n).map(|i| i as f64 - (n / 2) as f64 + 0.5).collect();
    let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let y: Vec<f64> = (0..n).map(|i| if w[i] < 0.0 { x[i] } else { 3.0 * x[i] }).collect();
    TrainingFrame::new(
        ["intercept", "x", "w"].map(String::from).to_vec(),
        vec![vec![1.0; n], x, w],
        y,
    )
    .unwrap()
}

#[test]
fn brute_force_agreement_on_random_fixtures() {
    for seed in 0..60 {
        let f = split_fixture(seed);
        let cfg = config(&["intercept", "x"], &f.candidate_names);
        let rows: Vec<usize> = (0..f.frame.n_rows()).collect();
        let got = best_split(&f.frame, &rows, &cfg).unwrap();
        let want = brute_force_split(&f.leaf, &f.candidates, f.frame.response(), 4);
        match (got, want) {
            (Some(g), Some(w)) => {
                assert_eq!(g.variable, f.candidate_names[w.variable], "seed {seed}");
                assert!(g.threshold >= w.lower && g.threshold < w.upper, "seed {seed}");
                assert!(
                    (g.sse - w.sse).abs() <= 1e-9 * w.sse.max(1e-300),
                    "seed {seed}: {} vs {}",
                    g.sse,
                    w.sse
                );
            }
            (None, None) => {}
            (g, w) => panic!("seed {seed}: {g:?} vs {w:?}"),
        }
    }
}

#[test]
fn exact_regime_split() {
    let frame = two_regime(12);
    let cfg = config(&["intercept", "x"], &["w".to_string()]);
    let rows: Vec<usize> = (0..12).collect();
    let s = best_split(&frame, &rows, &cfg).unwrap().unwrap();
    assert_eq!(s.variable, "w");
    assert_eq!((s.lower, s.upper, s.threshold), (-0.5, 0.5, 0.0));
    assert!(s.sse < 1e-20);
    assert_eq!(
        split_sse(&frame, &rows, "w", 0.0, &cfg).unwrap().map(|v| v < 1e-20),
        Some(true)
    );
}

#[test]
fn split_sse_matches_two_independent_fits() {
    let frame = two_regime(12);
    let noisy: Vec<f64> = frame
        .response()
        .iter()
        .enumerate()
        .map(|(i, v)| v + ((i * 5) % 3) as f64 * 0.1)
        .collect();
    let frame = TrainingFrame::new(
        frame.names().to_vec(),
        (0..3).map(|j| frame.column(j).to_vec()).collect(),
        noisy.clone(),
    )
    .unwrap();
    let cfg = config(&["intercept", "x"], &["w".to_string()]);
    let rows: Vec<usize> = (0..12).collect();
    let leaf = vec![frame.column(0).to_vec(), frame.column(1).to_vec()];
    let w = frame.column(2);
    let left: Vec<usize> = rows.iter().copied().filter(|&i| w[i] <= 1.0).collect();
    let right: Vec<usize> = rows.iter().copied().filter(|&i| w[i] > 1.0).collect();
    let want = ols_rss(&leaf, &noisy, &left) + ols_rss(&leaf, &noisy, &right);
    let got = split_sse(&frame, &rows, "w", 1.0, &cfg).unwrap().unwrap();
    assert!((got - want).abs() < 1e-9 * want);
    assert_eq!(split_sse(&frame, &rows, "w", 4.0, &cfg).unwrap(), None);
}

#[test]
fn homogeneous_data_does_not_split() {
    let n = 40;
    let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let w: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
    let frame = TrainingFrame::new(
        ["intercept", "x", "w"].map(String::from).to_vec(),
        vec![vec![1.0; n], x, w],
        y,
    )
    .unwrap();
    let cfg = config(&["intercept", "x"], &["w".to_string()]);
    let rows: Vec<usize> = (0..n).collect();
    assert!(best_split(&frame, &rows, &cfg).unwrap().is_none());
    assert!(best_split(&frame, &rows[..7], &cfg).unwrap().is_none());
}

#[test]
fn two_regime_tree_matches_per_regime_fits() {
    let frame = two_regime(40);
    let cfg = config(&["intercept", "x"], &["w".to_string()]);
    let rows: Vec<usize> = (0..40).collect();
    let tree = grow_tree(&frame, &rows, &cfg).unwrap();
    assert_eq!(tree.split_count(), 1);
    let leaf = vec![frame.column(0).to_vec(), frame.column(1).to_vec()];
    let w = frame.column(2);
    for (side, slope) in [(false, 1.0), (true, 3.0)] {
        let part: Vec<usize> = rows.iter().copied().filter(|&i| (w[i] >= 0.0) == side).collect();
        let want = ols_coefficients(&leaf, frame.response(), &part);
        let l = tree.leaf_for(&frame.row(part[0])).unwrap();
        assert!((l.coefficients.get("x").unwrap() - want[1]).abs() < 1e-10);
        assert!((want[1] - slope).abs() < 1e-10);
        let i = part[3];
        assert!((tree.predict(&frame.row(i)).unwrap() - frame.response()[i]).abs() < 1e-10);
    }
}

#[test]
fn records_at_the_threshold_go_left() {
    let frame = two_regime(40);
    let cfg = config(&["intercept", "x"], &["w".to_string()]);
    let tree = grow_tree(&frame, &(0..40).collect::<Vec<_>>(), &cfg).unwrap();
    let Node::Split { rule, .. } = &tree.nodes()[0] else {
        panic!("root is a leaf")
    };
    let mut at: BTreeMap<String, f64> = BTreeMap::new();
    at.insert("w".into(), rule.threshold);
    at.insert("x".into(), 2.0);
    at.insert("intercept".into(), 1.0);
    assert!((tree.predict(&at).unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn large_minimum_leaf_gives_one_ols_fit() {
    let frame = two_regime(30);
    let mut cfg = config(&["intercept", "x"], &["w".to_string()]);
    cfg.min_leaf_size = Some(16);
    let rows: Vec<usize> = (0..30).collect();
    let tree = grow_tree(&frame, &rows, &cfg).unwrap();
    assert_eq!(tree.split_count(), 0);
    let leaf = vec![frame.column(0).to_vec(), frame.column(1).to_vec()];
    let want = ols_coefficients(&leaf, frame.response(), &rows);
    let got = tree.leaves().next().unwrap();
    assert!((got.coefficients.get("x").unwrap() - want[1]).abs() < 1e-10);
    assert!((got.coefficients.get("intercept").unwrap() - want[0]).abs() < 1e-10);
}

#[test]
fn json_roundtrip_preserves_predictions() {
    let f = split_fixture(3);
    let cfg = config(&["intercept", "x"], &f.candidate_names);
    let rows: Vec<usize> = (0..f.frame.n_rows()).collect();
    let tree = grow_tree(&f.frame, &rows, &cfg).unwrap();
    let back = ModelTree::from_json(&tree.to_json().unwrap()).unwrap();
    assert_eq!(back.split_log(), tree.split_log());
    for i in rows {
        assert_eq!(
            back.predict(&f.frame.row(i)).unwrap(),
            tree.predict(&f.frame.row(i)).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn stopping_rules_hold(seed in 0u64..10_000, n in 20usize..400) {
        let f = split_fixture(seed);
        let n = n.min(f.frame.n_rows());
        let cfg = config(&["intercept", "x"], &f.candidate_names);
        let rows: Vec<usize> = (0..n).collect();
        let tree = grow_tree(&f.frame, &rows, &cfg).unwrap();
        prop_assert!(tree.split_count() <= cube_root_ceil(n));
        prop_assert!(tree.leaves().all(|l| l.n_obs >= 4));
        prop_assert_eq!(tree.leaves().map(|l| l.n_obs).sum::<usize>(), n);
    }

    #[test]
    fn cube_root_ceiling(n in 1usize..2_000_000) {
        let k = cube_root_ceil(n);
        prop_assert!(k.pow(3) >= n);
        prop_assert!((k - 1).pow(3) < n);
    }
}
