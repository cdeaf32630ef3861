mod common;

use proptest::prelude::*;
use railfare::data::Specification;
use railfare::data::{
    aggregate_tickets, deflate, ingest, read_tables, share_growth_table, CpiSeries, Dataset, FareCategory, Grouping,
    InputPaths, Period, TicketRow, ZoneTable,
};
use railfare::linreg::{fit_by_fare_category, fit_columns};
use railfare::synth::{generate, SynthConfig};
use std::collections::BTreeMap;
use std::fs;

#[test]
fn direction_growth_rates() {
    let rows = share_growth_table(&common::three_direction_fixture(), Grouping::Direction);
    let growth: BTreeMap<(String, i32), f64> = rows
        .iter()
        .filter_map(|r| r.growth_pct.map(|g| ((r.group.clone(), r.year), g)))
        .collect();
    let at = |g: &str, y: i32| format!("{:.1}", growth[&(g.to_string(), y)]);
    assert_eq!(at("Western", 2014), "12.4");
    assert_eq!(at("Kungur", 2014), "17.9");
    assert_eq!(at("Agglomeration", 2014), "28.3");
    assert_eq!(at("Western", 2016), "-5.0");
    assert!(rows.iter().filter(|r| r.year == 2013).all(|r| r.growth_pct.is_none()));
}

#[test]
fn zone_shares_sum_to_hundred() {
    let s = generate(&SynthConfig::two_segment()).unwrap();
    let rows = share_growth_table(&s.dataset, Grouping::Zone);
    let mut shares: BTreeMap<String, f64> = BTreeMap::new();
    for r in rows {
        shares.insert(r.group, r.share_pct);
    }
    assert!((shares.values().sum::<f64>() - 100.0).abs() < 1e-9);
}

#[test]
fn deflation_arithmetic() {
    let mut cpi = CpiSeries::new();
    let base = Period::new(2012, 1);
    let later = Period::new(2013, 1);
    cpi.insert(base, 100.0).unwrap();
    cpi.insert(later, 108.5).unwrap();
    let real = deflate(26.0, later, &cpi, base).unwrap();
    assert!((real - 26.0 / 1.085).abs() < 1e-12);
    assert_eq!(deflate(26.0, base, &cpi, base).unwrap(), 26.0);
}

#[test]
fn csv_roundtrip_and_reingestion() {
    let s = generate(&SynthConfig::two_segment()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.write(dir.path()).unwrap();
    let paths = InputPaths::in_dir(dir.path());
    let raw = read_tables(&paths).unwrap();
    assert_eq!(raw.stations, s.raw.stations);
    assert_eq!(raw.tickets, s.raw.tickets);
    assert_eq!(raw.tariffs, s.raw.tariffs);
    assert_eq!(raw.cpi, s.raw.cpi);
    let again = ingest(&paths, None).unwrap();
    assert_eq!(again.fingerprint().unwrap(), s.dataset.fingerprint().unwrap());
    let truth = fs::read_to_string(dir.path().join("ground_truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), s.dataset.len() + 1);
    let archive = s.dataset.to_archive_json().unwrap();
    assert_eq!(
        Dataset::from_archive_json(&archive).unwrap().fingerprint().unwrap(),
        s.dataset.fingerprint().unwrap()
    );
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(&SynthConfig::confounded()).unwrap().write(a.path()).unwrap();
    generate(&SynthConfig::confounded()).unwrap().write(b.path()).unwrap();
    for f in [
        "tickets.csv",
        "stations.csv",
        "tariffs.csv",
        "cpi.csv",
        "zones.csv",
        "ground_truth.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = generate(&SynthConfig::confounded().with_seed(1)).unwrap();
    assert_ne!(c.raw.tickets, generate(&SynthConfig::confounded()).unwrap().raw.tickets);
}

#[test]
fn truth_keys_match_records() {
    let s = generate(&SynthConfig::two_segment()).unwrap();
    assert_eq!(s.truth.rows.len(), s.dataset.len());
    for (i, row) in s.truth.rows.iter().enumerate() {
        assert_eq!(row.key, s.dataset.key(i).to_string());
    }
    let distinct: std::collections::BTreeSet<String> = s.truth.elasticities().iter().map(|e| e.to_string()).collect();
    assert_eq!(
        distinct.into_iter().collect::<Vec<_>>(),
        vec!["-0.5".to_string(), "-2".to_string()]
    );
}

#[test]
fn per_segment_log_log_slopes_match_the_generator() {
    let s = generate(&SynthConfig::two_segment()).unwrap();
    for (seg, alpha) in [(0usize, -2.0), (1, -0.5)] {
        let rows: Vec<usize> = (0..s.dataset.len())
            .filter(|&i| s.truth.rows[i].segment == seg)
            .collect();
        let y: Vec<f64> = rows.iter().map(|&i| s.dataset.records()[i].log_tickets).collect();
        let ones = vec![1.0; rows.len()];
        let p: Vec<f64> = rows.iter().map(|&i| s.dataset.records()[i].log_real_fare).collect();
        let sn: Vec<f64> = rows
            .iter()
            .map(|&i| s.dataset.feature(i, "season_sin").unwrap())
            .collect();
        let cs: Vec<f64> = rows
            .iter()
            .map(|&i| s.dataset.feature(i, "season_cos").unwrap())
            .collect();
        let names = ["intercept", "log_real_fare", "season_sin", "season_cos"].map(String::from);
        let fit = fit_columns(&names, &[&ones, &p, &sn, &cs], &y).unwrap();
        let a = fit.price_elasticity().unwrap();
        let se = fit.standard_error("log_real_fare").unwrap();
        assert!((a - alpha).abs() <= 3.0 * se, "segment {seg}: {a} vs {alpha} (se {se})");
    }
}

#[test]
fn fare_insensitive_category_is_not_significant() {
    let s = generate(&SynthConfig::with_children()).unwrap();
    let fits = fit_by_fare_category(&s.dataset, Specification::II).unwrap();
    let (lo, hi) = fits.fits[&FareCategory::Children]
        .confidence_interval("log_real_fare")
        .unwrap();
    assert!(lo <= 0.0 && 0.0 <= hi, "[{lo}, {hi}]");
    assert!(fits.fits.contains_key(&FareCategory::FullSingle));
}

#[test]
fn uncovered_distance_is_rejected() {
    let zones = ZoneTable::standard();
    assert!(zones.zone_of_distance(5.0).is_ok());
    assert_eq!(zones.zone_of_distance(13.0).unwrap(), 1);
    assert!(zones.zone_of_distance(1000.0).is_err());
}

proptest! {
    #[test]
    fn aggregation_conserves_tickets(
        rows in proptest::collection::vec((0usize..3, 0usize..3, 1u32..4, 1u64..50), 0..60)
    ) {
        let ids = ["A", "B", "C"];
        let tickets: Vec<TicketRow> = rows
            .iter()
            .map(|&(o, d, m, q)| TicketRow {
                origin: ids[o].into(),
                destination: ids[d].into(),
                year: 2015,
                month: m,
                fare_category: FareCategory::FullSingle,
                quantity: q,
                nominal_fare: 10.0,
            })
            .collect();
        let cells = aggregate_tickets(&tickets);
        prop_assert_eq!(cells.iter().map(|c| c.tickets).sum::<u64>(), tickets.iter().map(|t| t.quantity).sum::<u64>());
        let mut keys: Vec<_> = cells.iter().map(|c| (c.origin.clone(), c.destination.clone(), c.month)).collect();
        let n = keys.len();
        keys.dedup();
        prop_assert_eq!(keys.len(), n);
    }
}
