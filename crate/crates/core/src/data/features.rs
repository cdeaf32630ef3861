//! Trip, station and calendar attributes attached to every monthly record.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::types::{Direction, Route, SizeClass, Station};

const END_ATTRIBUTES: [&str; 14] = [
    "population",
    "size_none",
    "size_small",
    "size_middle",
    "size_large",
    "size_huge",
    "dist_settlement1_km",
    "dist_settlement2_km",
    "dist_bus_km",
    "dist_highway_km",
    "distance_missing",
    "summer_gardens",
    "lat",
    "lon",
];

/// Names of the per-record feature vector, in storage order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = vec![
            "distance_km".into(),
            "zone".into(),
            "from_perm".into(),
            "to_perm".into(),
        ];
        names.extend(Direction::ALL.iter().map(|d| format!("dir_{}", d.slug())));
        for end in ["orig", "dest"] {
            names.extend(END_ATTRIBUTES.iter().map(|a| format!("{end}_{a}")));
        }
        names.extend(["year", "month", "season_sin", "season_cos"].map(String::from));
        names
    })
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

/// Characteristics entering the fullest OLS specification.
pub fn characteristic_names() -> Vec<String> {
    let mut names = vec!["distance_km".to_string()];
    for end in ["orig", "dest"] {
        for class in &SizeClass::ALL[1..] {
            names.push(format!("{end}_size_{}", class.slug()));
        }
    }
    for end in ["orig", "dest"] {
        for a in [
            "dist_settlement1_km",
            "dist_settlement2_km",
            "dist_bus_km",
            "dist_highway_km",
            "distance_missing",
            "summer_gardens",
        ] {
            names.push(format!("{end}_{a}"));
        }
    }
    names.push("from_perm".into());
    names.push("to_perm".into());
    for end in ["orig", "dest"] {
        names.push(format!("{end}_lat"));
        names.push(format!("{end}_lon"));
    }
    names
}

/// Default variables a tree may split on: trip and station attributes,
/// without the zone index (a coarsening of distance) and calendar terms.
pub fn default_split_candidates() -> Vec<String> {
    feature_names()
        .iter()
        .filter(|n| !matches!(n.as_str(), "zone" | "year" | "month" | "season_sin" | "season_cos"))
        .cloned()
        .collect()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn push_end(out: &mut Vec<f64>, s: &Station) {
    let class = s.size_class();
    out.push(s.population_within_5km as f64);
    for c in SizeClass::ALL {
        out.push(flag(class == c));
    }
    out.push(s.dist_nearest_settlement_km);
    out.push(s.dist_second_settlement_km);
    out.push(s.dist_bus_stop_km);
    out.push(s.dist_highway_km);
    out.push(flag(s.distances_imputed));
    out.push(flag(s.has_summer_gardens));
    out.push(s.latitude);
    out.push(s.longitude);
}

pub fn compute(route: &Route, origin: &Station, destination: &Station, year: i32, month: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_names().len());
    out.push(route.distance_km);
    out.push(route.zone as f64);
    out.push(flag(origin.is_perm));
    out.push(flag(destination.is_perm));
    for d in Direction::ALL {
        out.push(flag(route.direction == d));
    }
    push_end(&mut out, origin);
    push_end(&mut out, destination);
    let angle = 2.0 * PI * (month as f64 - 1.0) / 12.0;
    out.extend([year as f64, month as f64, angle.sin(), angle.cos()]);
    debug_assert_eq!(out.len(), feature_names().len());
    out
}
