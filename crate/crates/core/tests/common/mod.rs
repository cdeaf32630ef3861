#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use railfare::data::{
    CellTotal, CpiSeries, Dataset, Direction, FareCategory, Period, Station, TariffEntry, TariffTable, ZoneTable,
};
use railfare::tree::TrainingFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Residual sum of squares of `y` on the given rows of `x`, via SVD.
pub fn ols_rss(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> f64 {
    let x = DMatrix::from_fn(rows.len(), x.len(), |i, j| x[j][rows[i]]);
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&yv, 1e-12).expect("svd solve");
    (yv - x * beta).norm_squared()
}

/// Coefficients of `y` on the given rows of `x`, via SVD.
pub fn ols_coefficients(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> Vec<f64> {
    let xm = DMatrix::from_fn(rows.len(), x.len(), |i, j| x[j][rows[i]]);
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let beta = xm.svd(true, true).solve(&yv, 1e-12).expect("svd solve");
    beta.iter().copied().collect()
}

#[derive(Debug, Clone)]
pub struct OracleSplit {
    pub variable: usize,
    pub lower: f64,
    pub upper: f64,
    pub sse: f64,
}

/// Every candidate variable at every midpoint between consecutive distinct
/// values, each side refitted from scratch.
pub fn brute_force_split(
    leaf: &[Vec<f64>],
    candidates: &[Vec<f64>],
    y: &[f64],
    min_leaf: usize,
) -> Option<OracleSplit> {
    let n = y.len();
    let mut best: Option<OracleSplit> = None;
    for (v, col) in candidates.iter().enumerate() {
        let mut values: Vec<f64> = col.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let s = w[0] + (w[1] - w[0]) / 2.0;
            let left: Vec<usize> = (0..n).filter(|&i| col[i] <= s).collect();
            let right: Vec<usize> = (0..n).filter(|&i| col[i] > s).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let sse = ols_rss(leaf, y, &left) + ols_rss(leaf, y, &right);
            if best.as_ref().map_or(true, |b| sse < b.sse) {
                best = Some(OracleSplit {
                    variable: v,
                    lower: w[0],
                    upper: w[1],
                    sse,
                });
            }
        }
    }
    best
}

/// Random split fixture: leaf regressors `[intercept, x]`, up to three
/// candidates, and a response whose slope changes across a threshold.
pub struct Fixture {
    pub frame: TrainingFrame,
    pub leaf: Vec<Vec<f64>>,
    pub candidates: Vec<Vec<f64>>,
    pub candidate_names: Vec<String>,
}

pub fn split_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=200);
    let k = rng.random_range(1..=3);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut candidates = Vec::new();
    for j in 0..k {
        let col: Vec<f64> = if j == 1 {
            (0..n).map(|_| rng.random_range(0..6) as f64).collect()
        } else {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        candidates.push(col);
    }
    let cut = rng.random_range(-0.5..0.5);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let slope = if candidates[0][i] <= cut { 1.0 } else { -2.0 };
            slope * x[i] + 0.5 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let candidate_names: Vec<String> = (0..k).map(|j| format!("w{j}")).collect();
    let mut names = vec!["intercept".to_string(), "x".to_string()];
    names.extend(candidate_names.iter().cloned());
    let mut columns = vec![vec![1.0; n], x.clone()];
    columns.extend(candidates.iter().cloned());
    Fixture {
        frame: TrainingFrame::new(names, columns, y).unwrap(),
        leaf: vec![vec![1.0; n], x],
        candidates,
        candidate_names,
    }
}

fn station(id: &str, direction: Direction, lat: f64, agglomeration: bool) -> Station {
    Station {
        id: id.into(),
        name: id.into(),
        direction,
        latitude: lat,
        longitude: 56.25,
        population_within_5km: 500,
        dist_nearest_settlement_km: 1.0,
        dist_second_settlement_km: 2.0,
        dist_bus_stop_km: 0.5,
        dist_highway_km: 1.5,
        distances_imputed: false,
        has_summer_gardens: false,
        is_perm: agglomeration,
        is_agglomeration: agglomeration,
    }
}

/// Four stations with the yearly ticket counts of three directions.
pub fn three_direction_fixture() -> Dataset {
    let stations = vec![
        station("P1", Direction::Agglomeration, 58.00, true),
        station("P2", Direction::Agglomeration, 58.03, true),
        station("W1", Direction::Western, 58.06, false),
        station("K1", Direction::Kungur, 57.97, false),
    ];
    let counts: [(&str, &str, [u64; 4]); 3] = [
        ("P1", "W1", [514382, 578336, 572233, 543398]),
        ("P1", "K1", [242235, 285495, 307298, 301267]),
        ("P1", "P2", [385072, 493979, 557988, 557307]),
    ];
    let mut cpi = CpiSeries::new();
    let mut tariffs = TariffTable::default();
    for year in 2013..=2016 {
        for month in 1..=12 {
            cpi.insert(Period::new(year, month), 100.0).unwrap();
        }
        for zone in 1..=17 {
            tariffs.insert(TariffEntry {
                year,
                zone,
                full_fare: 20.0 + zone as f64,
                rst_upper: None,
            });
        }
    }
    let mut cells = Vec::new();
    for (o, d, by_year) in counts {
        for (k, n) in by_year.iter().enumerate() {
            cells.push(CellTotal {
                origin: o.into(),
                destination: d.into(),
                year: 2013 + k as i32,
                month: 6,
                fare_category: FareCategory::FullSingle,
                tickets: *n,
                revenue: 0.0,
            });
        }
    }
    Dataset::from_cells(stations, ZoneTable::standard(), cpi, tariffs, cells, None).unwrap()
}
