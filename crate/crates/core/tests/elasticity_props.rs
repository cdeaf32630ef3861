use proptest::prelude::*;
use railfare::data::{Dataset, Direction};
use railfare::elasticity::{
    elasticities, elasticity_distribution, group_elasticity, kernel_density, point_elasticity, silverman_bandwidth,
    DistanceBands, ElasticityShares, Histogram,
};
use railfare::forest::{fit_forest, fit_forest_frame, BaggedForest, ForestConfig, Membership};
use railfare::synth::{generate, SynthConfig};
use railfare::tree::{grow_tree, TrainingFrame};

fn noiseless(elasticity: f64) -> Dataset {
    let mut c = SynthConfig::confounded();
    c.noise_sigma = 0.0;
    c.confounding_per_km = None;
    c.segments[0].elasticity = elasticity;
    c.segments[0].log_scale = 30.0;
    generate(&c).unwrap().dataset
}

fn one_leaf_forest(dataset: &Dataset, n_trees: usize) -> BaggedForest {
    let mut cfg = ForestConfig {
        n_trees,
        ..ForestConfig::default()
    };
    cfg.tree.max_splits = Some(0);
    fit_forest(dataset, &cfg).unwrap()
}

#[test]
fn single_leaf_forest_returns_its_coefficient() {
    let d = noiseless(-2.0);
    let forest = one_leaf_forest(&d, 3);
    let frame = TrainingFrame::from_dataset(&d);
    for delta in [0.10, -0.05, 0.5] {
        let e = elasticities(&forest, &frame, delta).unwrap();
        assert!(e.iter().all(|v| (v + 2.0).abs() < 1e-6), "{delta}: {}", e[0]);
    }
    let p = point_elasticity(&forest, &frame.row(7), 0.1).unwrap();
    assert!((p + 2.0).abs() < 1e-6);
    let report = elasticity_distribution(&forest, &d, 0.1, 40, 0.05).unwrap();
    assert_eq!(report.shares.elastic, 1.0);
    assert_eq!(report.histogram.counts.iter().filter(|c| **c > 0).count(), 1);
}

#[test]
fn zero_price_coefficient_gives_zero() {
    let d = noiseless(0.0);
    let forest = one_leaf_forest(&d, 2);
    let e = elasticities(&forest, &TrainingFrame::from_dataset(&d), 0.1).unwrap();
    assert!(e.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn mean_over_trees() {
    let a = noiseless(-2.0);
    let b = noiseless(-1.0);
    let mut cfg = ForestConfig {
        n_trees: 2,
        ..ForestConfig::default()
    };
    cfg.tree.max_splits = Some(0);
    let rows: Vec<usize> = (0..a.len()).collect();
    let fa = TrainingFrame::from_dataset(&a);
    let fb = TrainingFrame::from_dataset(&b);
    let trees = vec![
        grow_tree(&fa, &rows, &cfg.tree).unwrap(),
        grow_tree(&fb, &rows, &cfg.tree).unwrap(),
    ];
    let memberships = vec![Membership::new(a.len()), Membership::new(a.len())];
    let forest = BaggedForest::from_parts(cfg, trees, memberships).unwrap();
    let e = elasticities(&forest, &fa, 0.1).unwrap();
    assert!(e.iter().all(|v| (v + 1.5).abs() < 1e-6));
}

#[test]
fn mixture_shares_and_mean() {
    let mut c = SynthConfig::two_segment();
    c.lines[0].n_stations = 15;
    c.lines[0].spacing_km = 12.0;
    c.lines[1].n_stations = 5;
    let s = generate(&c).unwrap();
    let truth = ElasticityShares::classify(&s.truth.elasticities(), 0.05);
    let cfg = ForestConfig {
        n_trees: 20,
        ..ForestConfig::default()
    };
    let forest = fit_forest(&s.dataset, &cfg).unwrap();
    let report = elasticity_distribution(&forest, &s.dataset, 0.1, 40, 0.05).unwrap();
    assert!(
        (report.shares.elastic - truth.elastic).abs() <= 0.05,
        "{:?}",
        report.shares
    );
    let want: f64 = s.truth.elasticities().iter().sum::<f64>() / s.dataset.len() as f64;
    assert!((report.mean - want).abs() <= 0.1, "{} vs {want}", report.mean);
}

#[test]
fn noiseless_calibrated_groups_are_recovered() {
    let mut c = SynthConfig::calibrated();
    c.noise_sigma = 0.0;
    for s in &mut c.segments {
        s.log_scale += 6.0;
    }
    let s = generate(&c).unwrap();
    let cfg = ForestConfig {
        n_trees: 8,
        ..ForestConfig::default()
    };
    let frame = TrainingFrame::from_dataset(&s.dataset);
    let forest = fit_forest_frame(&frame, &cfg, None).unwrap();
    let e = elasticities(&forest, &frame, 0.1).unwrap();
    let table = group_elasticity(&e, &s.dataset, &DistanceBands::default()).unwrap();
    let truth = group_elasticity(&s.truth.elasticities(), &s.dataset, &DistanceBands::default()).unwrap();
    assert_eq!(truth.direction_mean(Direction::Western).mean(), Some(-1.75));
    for d in Direction::ALL {
        let (got, want) = (
            table.direction_mean(d).mean().unwrap(),
            truth.direction_mean(d).mean().unwrap(),
        );
        assert!((got - want).abs() <= 0.05, "{d}: {got} vs {want}");
    }
}

#[test]
fn empty_cells_print_as_dashes() {
    let s = generate(&SynthConfig::two_segment()).unwrap();
    let e = s.truth.elasticities();
    let t = group_elasticity(&e, &s.dataset, &DistanceBands::default()).unwrap();
    let csv = t.to_csv();
    assert!(csv.lines().next().unwrap().starts_with("group,"));
    assert!(csv.contains(",-"));
    assert_eq!(t.overall.count, s.dataset.len());
    let overall = t.overall.mean().unwrap();
    assert!((overall - e.iter().sum::<f64>() / e.len() as f64).abs() < 1e-12);
}

#[test]
fn overlapping_bands_are_rejected() {
    let mut b = DistanceBands::default();
    b.out_of_perm[1].first_zone = 3;
    assert!(b.validate().is_err());
}

#[test]
fn degenerate_histogram() {
    let h = Histogram::new(&[-2.0; 10], 40);
    assert_eq!(h.counts.iter().sum::<usize>(), 10);
    assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
}

proptest! {
    #[test]
    fn shares_partition_the_records(values in proptest::collection::vec(-4.0f64..1.0, 0..200), tol in 0.0f64..0.2) {
        let s = ElasticityShares::classify(&values, tol);
        if !values.is_empty() {
            prop_assert!((s.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_keeps_every_value(values in proptest::collection::vec(-4.0f64..1.0, 1..200), bins in 1usize..60) {
        let h = Histogram::new(&values, bins);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        prop_assert_eq!(h.edges.len(), bins + 1);
    }

    #[test]
    fn density_integrates_to_one(values in proptest::collection::vec(-4.0f64..1.0, 2..100)) {
        let d = kernel_density(&values, 400);
        let step = d[1].0 - d[0].0;
        let mass: f64 = d.iter().map(|(_, y)| y * step).sum();
        prop_assert!((mass - 1.0).abs() < 0.02, "mass {} h {}", mass, silverman_bandwidth(&values));
    }
}
