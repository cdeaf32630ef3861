use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::dataset::Dataset;
use super::types::SizeClass;

/// How tickets are grouped in the descriptive tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Grouping {
    Direction,
    Zone,
    SettlementPair,
}

impl Grouping {
    pub const NAMES: [&'static str; 3] = ["direction", "zone", "settlement_pair"];
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direction" => Ok(Grouping::Direction),
            "zone" => Ok(Grouping::Zone),
            "settlement_pair" | "settlement-pair" => Ok(Grouping::SettlementPair),
            other => Err(format!(
                "unknown grouping `{other}`; expected one of: {}",
                Grouping::NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            Grouping::Direction => 0,
            Grouping::Zone => 1,
            Grouping::SettlementPair => 2,
        };
        f.write_str(Grouping::NAMES[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareGrowthRow {
    pub group: String,
    pub year: i32,
    pub count: u64,
    /// Growth over the previous year; `None` for the first year of a group
    /// or when the previous year had no tickets.
    pub growth_pct: Option<f64>,
    /// Share of the group in all tickets over the whole sample.
    pub share_pct: f64,
}

fn group_key(dataset: &Dataset, idx: usize, grouping: Grouping) -> (u32, String) {
    let r = &dataset.records()[idx];
    let route = dataset.route_of(r);
    match grouping {
        Grouping::Direction => (route.direction.index() as u32, route.direction.to_string()),
        Grouping::Zone => (route.zone, format!("zone {}", route.zone)),
        Grouping::SettlementPair => {
            let o = dataset.station(&route.origin).map(|s| s.size_class());
            let d = dataset.station(&route.destination).map(|s| s.size_class());
            let (o, d) = (o.unwrap_or(SizeClass::None), d.unwrap_or(SizeClass::None));
            ((o as u32) * 5 + d as u32, format!("{}->{}", o.slug(), d.slug()))
        }
    }
}

/// Ticket counts per group and year with year-on-year growth and the
/// group's share of the grand total.
pub fn share_growth_table(dataset: &Dataset, grouping: Grouping) -> Vec<ShareGrowthRow> {
    let mut counts: BTreeMap<(u32, String), BTreeMap<i32, u64>> = BTreeMap::new();
    for (i, r) in dataset.records().iter().enumerate() {
        *counts
            .entry(group_key(dataset, i, grouping))
            .or_default()
            .entry(r.year)
            .or_insert(0) += r.tickets;
    }
    let grand: u64 = counts.values().flat_map(|y| y.values()).sum();
    let mut rows = Vec::new();
    for ((_, group), years) in counts {
        let total: u64 = years.values().sum();
        let share_pct = if grand > 0 {
            100.0 * total as f64 / grand as f64
        } else {
            0.0
        };
        let mut previous: Option<(i32, u64)> = None;
        for (year, count) in years {
            let growth_pct = match previous {
                Some((py, pc)) if py == year - 1 && pc > 0 => Some(100.0 * (count as f64 / pc as f64 - 1.0)),
                _ => None,
            };
            rows.push(ShareGrowthRow {
                group: group.clone(),
                year,
                count,
                growth_pct,
                share_pct,
            });
            previous = Some((year, count));
        }
    }
    rows
}

/// Shares of tickets by settlement size at departure (rows) and arrival
/// (columns), in percent of all tickets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlementMatrix {
    pub shares_pct: [[f64; 5]; 5],
    pub row_totals_pct: [f64; 5],
    pub column_totals_pct: [f64; 5],
}

pub fn settlement_pair_matrix(dataset: &Dataset) -> SettlementMatrix {
    let mut counts = [[0u64; 5]; 5];
    for r in dataset.records() {
        let route = dataset.route_of(r);
        let o = dataset
            .station(&route.origin)
            .map_or(SizeClass::None, |s| s.size_class());
        let d = dataset
            .station(&route.destination)
            .map_or(SizeClass::None, |s| s.size_class());
        counts[o as usize][d as usize] += r.tickets;
    }
    let grand: u64 = counts.iter().flatten().sum();
    let pct = |c: u64| {
        if grand > 0 {
            100.0 * c as f64 / grand as f64
        } else {
            0.0
        }
    };
    let mut m = SettlementMatrix {
        shares_pct: [[0.0; 5]; 5],
        row_totals_pct: [0.0; 5],
        column_totals_pct: [0.0; 5],
    };
    for i in 0..5 {
        for j in 0..5 {
            m.shares_pct[i][j] = pct(counts[i][j]);
        }
        m.row_totals_pct[i] = pct(counts[i].iter().sum());
        m.column_totals_pct[i] = pct(counts.iter().map(|row| row[i]).sum());
    }
    m
}
