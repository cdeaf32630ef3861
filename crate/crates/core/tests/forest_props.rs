mod common;

use common::{ols_coefficients, split_fixture};
use proptest::prelude::*;
use railfare::data::Specification;
use railfare::forest::{
    cv_r2_from, draw_sample, fit_forest, fit_forest_frame, BaggedForest, ForestConfig, ImportanceTable, Membership,
};
use railfare::linreg::fit_specification;
use railfare::synth::{generate, SynthConfig};
use railfare::tree::{grow_tree, grow_tree_presorted, presort, TrainingFrame, TreeConfig};

fn small_config(names: &[String], n_trees: usize, seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees,
        subsample_fraction: 0.75,
        with_replacement: false,
        seed,
        tree: TreeConfig {
            leaf_regressors: vec!["intercept".into(), "x".into()],
            split_candidates: names.to_vec(),
            max_splits: None,
            min_leaf_size: None,
            improvement_tolerance: 1e-9,
        },
    }
}

fn constant_frame(n: usize, value: f64) -> TrainingFrame {
    TrainingFrame::new(
        ["intercept", "x", "w0"].map(String::from).to_vec(),
        vec![
            vec![1.0; n],
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|i| (i % 5) as f64).collect(),
        ],
        vec![value; n],
    )
    .unwrap()
}

#[test]
fn single_full_sample_tree_equals_grow_tree() {
    let f = split_fixture(11);
    let mut cfg = small_config(&f.candidate_names, 1, 5);
    cfg.subsample_fraction = 1.0;
    let forest = fit_forest_frame(&f.frame, &cfg, None).unwrap();
    let rows: Vec<usize> = (0..f.frame.n_rows()).collect();
    let mut tree = grow_tree(&f.frame, &rows, &cfg.tree).unwrap();
    tree.discard_record_indices();
    assert_eq!(forest.trees()[0], tree);
    for i in rows {
        assert_eq!(
            forest.predict_mean(&f.frame.row(i)).unwrap(),
            tree.predict(&f.frame.row(i)).unwrap()
        );
    }
}

#[test]
fn presorted_growth_matches_plain_growth() {
    for seed in 0..10 {
        let f = split_fixture(seed);
        let cfg = small_config(&f.candidate_names, 1, seed);
        let ps = presort(&f.frame, &cfg.tree).unwrap();
        let rows = draw_sample(&cfg, f.frame.n_rows(), 1);
        let a = grow_tree(&f.frame, &rows, &cfg.tree).unwrap();
        let b = grow_tree_presorted(&f.frame, &rows, &cfg.tree, &ps).unwrap();
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn reruns_and_thread_counts_are_bit_identical() {
    let f = split_fixture(21);
    let cfg = small_config(&f.candidate_names, 24, 9);
    let a = fit_forest_frame(&f.frame, &cfg, Some(1)).unwrap();
    let b = fit_forest_frame(&f.frame, &cfg, Some(3)).unwrap();
    let c = fit_forest_frame(&f.frame, &cfg, None).unwrap();
    assert_eq!(a.trees(), b.trees());
    assert_eq!(a.trees(), c.trees());
    assert_eq!(a.memberships(), b.memberships());
    let pa = a.oob_predictions(&f.frame).unwrap();
    let pb = b.oob_predictions(&f.frame).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn out_of_bag_mean_uses_only_excluding_trees() {
    let n = 40;
    let frames: Vec<TrainingFrame> = [1.0, 2.0, 3.0, 4.0].iter().map(|v| constant_frame(n, *v)).collect();
    let cfg = small_config(&["w0".to_string()], 4, 0);
    let trees = frames
        .iter()
        .map(|fr| grow_tree(fr, &(0..n).collect::<Vec<_>>(), &cfg.tree).unwrap())
        .collect();
    let mut memberships = Vec::new();
    for b in 0..4 {
        let mut m = Membership::new(n);
        for i in 0..n {
            if b % 2 == 0 || i == 0 {
                m.insert(i);
            }
        }
        memberships.push(m);
    }
    let forest = BaggedForest::from_parts(cfg, trees, memberships).unwrap();
    let frame = &frames[0];
    assert_eq!(forest.oob_predict(frame, 0).unwrap(), None);
    let p = forest.oob_predict(frame, 5).unwrap().unwrap();
    assert!((p - 3.0).abs() < 1e-12);
    assert!((forest.predict_mean(&frame.row(5)).unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(forest.oob_predictions(frame).unwrap()[5], Some(p));
    assert!(forest.variable_importance().entries.is_empty());
}

#[test]
fn collapsed_forest_reproduces_ols() {
    let f = split_fixture(4);
    let mut cfg = small_config(&f.candidate_names, 8, 2);
    cfg.tree.max_splits = Some(0);
    let forest = fit_forest_frame(&f.frame, &cfg, None).unwrap();
    let n = f.frame.n_rows();
    for b in 1..=3 {
        let rows = draw_sample(&cfg, n, b);
        let beta = ols_coefficients(&f.leaf, f.frame.response(), &rows);
        let leaf = forest.trees()[b - 1].leaves().next().unwrap();
        assert!((leaf.coefficients.get("x").unwrap() - beta[1]).abs() < 1e-10);
    }
}

#[test]
fn cv_r2_edge_cases() {
    let y = [1.0, 2.0, 4.0];
    assert_eq!(cv_r2_from(&y, &y.map(Some)).unwrap(), 1.0);
    let mean = 7.0 / 3.0;
    assert!(cv_r2_from(&y, &[Some(mean); 3]).unwrap().abs() < 1e-12);
    assert!(cv_r2_from(&y, &[None; 3]).is_err());
}

#[test]
fn importance_counts_splits() {
    let t = ImportanceTable::from_counts(
        vec![("distance_km".into(), 2), ("dir_western".into(), 1)],
        &["dir_western".into(), "distance_km".into()],
    );
    assert!((t.share("distance_km") - 2.0 / 3.0).abs() < 1e-15);
    assert!((t.share("dir_western") - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(t.top().unwrap().variable, "distance_km");
}

#[test]
fn persistence_roundtrip() {
    let synth = generate(&SynthConfig::two_segment()).unwrap();
    let cfg = ForestConfig {
        n_trees: 6,
        ..ForestConfig::default()
    };
    let forest = fit_forest(&synth.dataset, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    forest.save(dir.path()).unwrap();
    let back = BaggedForest::load(dir.path()).unwrap();
    assert_eq!(back.trees(), forest.trees());
    assert_eq!(back.memberships(), forest.memberships());
    assert_eq!(back.dataset_fingerprint(), forest.dataset_fingerprint());
    let frame = TrainingFrame::from_dataset(&synth.dataset);
    assert_eq!(
        back.oob_predictions(&frame).unwrap(),
        forest.oob_predictions(&frame).unwrap()
    );
}

#[test]
fn heterogeneous_segments_beat_pooled_ols() {
    let synth = generate(&SynthConfig::two_segment()).unwrap();
    let ols = fit_specification(&synth.dataset, Specification::IV).unwrap();
    let cfg = ForestConfig {
        n_trees: 30,
        ..ForestConfig::default()
    };
    let forest = fit_forest(&synth.dataset, &cfg).unwrap();
    let frame = TrainingFrame::from_dataset(&synth.dataset);
    assert!(forest.cv_r2(&frame).unwrap() > ols.r2);
}

#[test]
fn segment_variable_tops_importance_without_noise_splits() {
    let synth = generate(&SynthConfig::two_segment()).unwrap();
    let mut cfg = ForestConfig {
        n_trees: 20,
        ..ForestConfig::default()
    };
    cfg.tree.improvement_tolerance = 0.01;
    let forest = fit_forest(&synth.dataset, &cfg).unwrap();
    let imp = forest.variable_importance();
    assert_eq!(imp.top().unwrap().variable, "dir_western");
    let total: f64 = imp.entries.iter().map(|e| e.share).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn membership_hex_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..300)) {
        let mut m = Membership::new(bits.len());
        for (i, b) in bits.iter().enumerate() {
            if *b {
                m.insert(i);
            }
        }
        let back = Membership::from_hex(&m.to_hex(), bits.len()).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.count(), bits.iter().filter(|b| **b).count());
    }

    #[test]
    fn samples_are_sorted_subsets(n in 1usize..500, frac in 0.05f64..1.0, seed in any::<u64>(), b in 1usize..50) {
        let cfg = ForestConfig { subsample_fraction: frac, seed, ..ForestConfig::default() };
        let rows = draw_sample(&cfg, n, b);
        prop_assert_eq!(rows.len(), cfg.sample_size(n));
        prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rows.iter().all(|&r| r < n));
    }
}
