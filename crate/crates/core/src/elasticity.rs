//! Price elasticities from counterfactual price perturbation of a forest.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Direction, TripType};
use crate::error::{Error, Result};
use crate::forest::BaggedForest;
use crate::tree::{FeatureSource, TrainingFrame};

pub const DEFAULT_PERTURBATION: f64 = 0.10;
pub const DEFAULT_INELASTIC_TOLERANCE: f64 = 0.05;
pub const DEFAULT_BINS: usize = 40;
const DENSITY_POINTS: usize = 200;

fn log_shift(perturbation: f64) -> Result<f64> {
    if !(perturbation > -1.0) || perturbation == 0.0 || !perturbation.is_finite() {
        return Err(Error::Config(format!(
            "price perturbation {perturbation} must be finite, nonzero and above -1"
        )));
    }
    Ok((1.0 + perturbation).ln())
}

/// `(predict_mean(p + ln(1+δ)) - predict_mean(p)) / ln(1+δ)` for one record.
pub fn point_elasticity(
    forest: &BaggedForest,
    record: &(impl FeatureSource + ?Sized),
    perturbation: f64,
) -> Result<f64> {
    let s = log_shift(perturbation)?;
    let moved = forest.predict_mean_shifted(record, s)?;
    let base = forest.predict_mean(record)?;
    Ok((moved - base) / s)
}

/// Point elasticity of every frame row.
pub fn elasticities(forest: &BaggedForest, frame: &TrainingFrame, perturbation: f64) -> Result<Vec<f64>> {
    let s = log_shift(perturbation)?;
    let compiled = forest.compile(frame)?;
    let b = compiled.len() as f64;
    Ok((0..frame.n_rows())
        .into_par_iter()
        .map(|row| compiled.iter().map(|t| t.price_response(frame, row, s)).sum::<f64>() / b / s)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElasticityShares {
    /// `e < -1`
    pub elastic: f64,
    /// `-1 <= e < -tol`
    pub weakly_elastic: f64,
    /// `|e| <= tol`
    pub inelastic: f64,
    /// `e > tol`
    pub positive: f64,
}

impl ElasticityShares {
    pub fn classify(values: &[f64], tolerance: f64) -> Self {
        let mut counts = [0usize; 4];
        for &e in values {
            let k = if e < -1.0 {
                0
            } else if e < -tolerance {
                1
            } else if e <= tolerance {
                2
            } else {
                3
            };
            counts[k] += 1;
        }
        let n = values.len().max(1) as f64;
        ElasticityShares {
            elastic: counts[0] as f64 / n,
            weakly_elastic: counts[1] as f64 / n,
            inelastic: counts[2] as f64 / n,
            positive: counts[3] as f64 / n,
        }
    }

    pub fn total(&self) -> f64 {
        self.elastic + self.weakly_elastic + self.inelastic + self.positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts.len() + 1` increasing edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let (mut lo, mut hi) = min_max(values);
        if values.is_empty() {
            (lo, hi) = (0.0, 1.0);
        } else if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            counts[k] += 1;
        }
        Histogram { edges, counts }
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 1.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-3 * mean.abs().max(1.0)
    }
}

/// Gaussian kernel density on an even grid covering the data.
pub fn kernel_density(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    if values.is_empty() || points == 0 {
        return Vec::new();
    }
    let h = silverman_bandwidth(values);
    let (lo, hi) = min_max(values);
    let (lo, hi) = (lo - 3.0 * h, hi + 3.0 * h);
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .into_par_iter()
        .map(|i| {
            let x = lo + step * i as f64;
            let s: f64 = values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
            (x, s * norm)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElasticityReport {
    pub perturbation: f64,
    pub inelastic_tolerance: f64,
    /// Record keys in dataset order.
    pub keys: Vec<String>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub shares: ElasticityShares,
    pub histogram: Histogram,
    pub density: Vec<(f64, f64)>,
}

impl ElasticityReport {
    pub fn from_values(keys: Vec<String>, values: Vec<f64>, perturbation: f64, tolerance: f64, bins: usize) -> Self {
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        ElasticityReport {
            perturbation,
            inelastic_tolerance: tolerance,
            shares: ElasticityShares::classify(&values, tolerance),
            histogram: Histogram::new(&values, bins),
            density: kernel_density(&values, DENSITY_POINTS),
            mean,
            keys,
            values,
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.keys.iter().position(|k| k == key).map(|i| self.values[i])
    }

    /// Shares, mean and histogram as JSON.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            n_records: usize,
            perturbation: f64,
            inelastic_tolerance: f64,
            mean: f64,
            shares: &'a ElasticityShares,
            histogram: &'a Histogram,
            density: &'a [(f64, f64)],
        }
        Ok(serde_json::to_string_pretty(&Summary {
            n_records: self.values.len(),
            perturbation: self.perturbation,
            inelastic_tolerance: self.inelastic_tolerance,
            mean: self.mean,
            shares: &self.shares,
            histogram: &self.histogram,
            density: &self.density,
        })?)
    }

    pub fn per_record_csv(&self, dataset: &Dataset) -> String {
        let mut out = String::from("record,direction,trip_type,zone,elasticity\n");
        for (i, r) in dataset.records().iter().enumerate() {
            let route = dataset.route_of(r);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.keys[i], route.direction, route.trip_type, route.zone, self.values[i]
            );
        }
        out
    }

    /// Histogram with the density curve overlaid, as a standalone SVG.
    pub fn histogram_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 40.0);
        let h_ = &self.histogram;
        let (x0, x1) = (h_.edges[0], h_.edges[h_.edges.len() - 1]);
        let n = self.values.len().max(1) as f64;
        let bin_w = (x1 - x0) / h_.counts.len() as f64;
        let max_density = h_
            .counts
            .iter()
            .map(|&c| c as f64 / n / bin_w)
            .chain(self.density.iter().map(|p| p.1))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let dx0 = self.density.first().map_or(x0, |p| p.0).min(x0);
        let dx1 = self.density.last().map_or(x1, |p| p.0).max(x1);
        let sx = |x: f64| pad + (x - dx0) / (dx1 - dx0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - y / max_density * (h - 2.0 * pad);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        for (i, &c) in h_.counts.iter().enumerate() {
            let y = sy(c as f64 / n / bin_w);
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#9ab\" stroke=\"#567\"/>",
                sx(h_.edges[i]),
                y,
                sx(h_.edges[i + 1]) - sx(h_.edges[i]),
                h - pad - y
            );
        }
        let path: Vec<String> = self
            .density
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#c33\" stroke-width=\"2\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
            h - pad,
            w - pad
        );
        for x in [dx0, -1.0, 0.0, dx1] {
            if x >= dx0 && x <= dx1 {
                let _ = writeln!(
                    svg,
                    "<text x=\"{:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{:.2}</text>",
                    sx(x),
                    h - pad + 16.0,
                    x
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Elasticity of every record of the dataset the forest was trained on.
pub fn elasticity_distribution(
    forest: &BaggedForest,
    dataset: &Dataset,
    perturbation: f64,
    bins: usize,
    tolerance: f64,
) -> Result<ElasticityReport> {
    let frame = TrainingFrame::from_dataset(dataset);
    let values = elasticities(forest, &frame, perturbation)?;
    let keys = (0..dataset.len()).map(|i| dataset.key(i).to_string()).collect();
    Ok(ElasticityReport::from_values(
        keys,
        values,
        perturbation,
        tolerance,
        bins,
    ))
}

/// Inclusive range of tariff zones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneBand {
    pub name: String,
    pub first_zone: u32,
    pub last_zone: u32,
}

impl ZoneBand {
    pub fn new(name: &str, first_zone: u32, last_zone: u32) -> Self {
        ZoneBand {
            name: name.to_string(),
            first_zone,
            last_zone,
        }
    }

    pub fn contains(&self, zone: u32) -> bool {
        (self.first_zone..=self.last_zone).contains(&zone)
    }

    pub fn label(&self) -> String {
        if self.first_zone == self.last_zone {
            format!("{} ({} zone)", self.name, self.first_zone)
        } else {
            format!("{} ({}-{} zones)", self.name, self.first_zone, self.last_zone)
        }
    }
}

/// Distance bands for each trip type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceBands {
    pub from_to_perm: Vec<ZoneBand>,
    pub out_of_perm: Vec<ZoneBand>,
    pub within_perm: Vec<ZoneBand>,
}

impl Default for DistanceBands {
    fn default() -> Self {
        DistanceBands {
            from_to_perm: vec![
                ZoneBand::new("Short", 1, 4),
                ZoneBand::new("Middle", 5, 8),
                ZoneBand::new("Long", 9, 17),
            ],
            out_of_perm: vec![
                ZoneBand::new("Short", 1, 3),
                ZoneBand::new("Middle", 4, 6),
                ZoneBand::new("Long", 7, 17),
            ],
            within_perm: vec![ZoneBand::new("Short", 1, 1), ZoneBand::new("Middle", 2, 2)],
        }
    }
}

impl DistanceBands {
    pub fn for_trip_type(&self, t: TripType) -> &[ZoneBand] {
        match t {
            TripType::FromToPerm => &self.from_to_perm,
            TripType::OutOfPerm => &self.out_of_perm,
            TripType::WithinPerm => &self.within_perm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in TripType::ALL {
            let bands = self.for_trip_type(t);
            for (i, a) in bands.iter().enumerate() {
                if a.first_zone > a.last_zone {
                    return Err(Error::Config(format!("band `{}` of {t} is empty", a.name)));
                }
                for b in &bands[i + 1..] {
                    if a.first_zone <= b.last_zone && b.first_zone <= a.last_zone {
                        return Err(Error::Config(format!(
                            "bands `{}` and `{}` of {t} overlap",
                            a.name, b.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Index of the band holding `zone`.
    pub fn band_of(&self, t: TripType, zone: u32) -> Result<usize> {
        self.for_trip_type(t)
            .iter()
            .position(|b| b.contains(zone))
            .ok_or_else(|| Error::UncoveredZone {
                zone,
                trip_type: t.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CellStat {
    pub count: usize,
    pub sum: f64,
}

impl CellStat {
    fn add(&mut self, e: f64) {
        self.count += 1;
        self.sum += e;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Mean elasticity by direction, trip type and distance band, with
/// marginals over bands, trip types and everything.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupElasticityTable {
    pub bands: DistanceBands,
    /// `[direction][trip type][band]`
    pub cells: Vec<Vec<Vec<CellStat>>>,
    /// `[direction][trip type]`
    pub by_trip_type: Vec<Vec<CellStat>>,
    /// `[direction]`
    pub by_direction: Vec<CellStat>,
    pub overall: CellStat,
}

impl GroupElasticityTable {
    pub fn cell(&self, d: Direction, t: TripType, band: usize) -> CellStat {
        self.cells[d.index()][trip_index(t)][band]
    }

    pub fn trip_type_mean(&self, d: Direction, t: TripType) -> CellStat {
        self.by_trip_type[d.index()][trip_index(t)]
    }

    pub fn direction_mean(&self, d: Direction) -> CellStat {
        self.by_direction[d.index()]
    }

    /// The table laid out with one column per direction; empty cells
    /// print as `-`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for d in Direction::ALL {
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
        let fmt = |c: CellStat| c.mean().map_or("-".to_string(), |m| format!("{m:.4}"));
        let mut row = |label: String, cells: Vec<CellStat>| {
            out.push_str(&label);
            for c in cells {
                out.push(',');
                out.push_str(&fmt(c));
            }
            out.push('\n');
        };
        row("All types".into(), self.by_direction.clone());
        for t in TripType::ALL {
            let ti = trip_index(t);
            row(t.label().into(), self.by_trip_type.iter().map(|v| v[ti]).collect());
            for (bi, band) in self.bands.for_trip_type(t).iter().enumerate() {
                row(
                    format!("{}: {}", t.label(), band.label()),
                    self.cells.iter().map(|v| v[ti][bi]).collect(),
                );
            }
        }
        out
    }

    /// Record counts in the same layout as `to_csv`.
    pub fn counts_csv(&self) -> String {
        let mut out = String::from("group");
        for d in Direction::ALL {
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
        let mut row = |label: String, cells: Vec<CellStat>| {
            out.push_str(&label);
            for c in cells {
                let _ = write!(out, ",{}", c.count);
            }
            out.push('\n');
        };
        row("All types".into(), self.by_direction.clone());
        for t in TripType::ALL {
            let ti = trip_index(t);
            row(t.label().into(), self.by_trip_type.iter().map(|v| v[ti]).collect());
            for (bi, band) in self.bands.for_trip_type(t).iter().enumerate() {
                row(
                    format!("{}: {}", t.label(), band.label()),
                    self.cells.iter().map(|v| v[ti][bi]).collect(),
                );
            }
        }
        out
    }
}

fn trip_index(t: TripType) -> usize {
    TripType::ALL.iter().position(|x| *x == t).unwrap()
}

/// Groups per-record elasticities by direction, trip type and zone band.
pub fn group_elasticity(values: &[f64], dataset: &Dataset, bands: &DistanceBands) -> Result<GroupElasticityTable> {
    if values.len() != dataset.len() {
        return Err(Error::Dimension(format!(
            "{} elasticities for {} records",
            values.len(),
            dataset.len()
        )));
    }
    bands.validate()?;
    let nd = Direction::ALL.len();
    let mut cells: Vec<Vec<Vec<CellStat>>> = (0..nd)
        .map(|_| {
            TripType::ALL
                .iter()
                .map(|t| vec![CellStat::default(); bands.for_trip_type(*t).len()])
                .collect()
        })
        .collect();
    let mut by_trip_type = vec![vec![CellStat::default(); 3]; nd];
    let mut by_direction = vec![CellStat::default(); nd];
    let mut overall = CellStat::default();
    for (r, &e) in dataset.records().iter().zip(values) {
        let route = dataset.route_of(r);
        let band = bands.band_of(route.trip_type, route.zone)?;
        let (di, ti) = (route.direction.index(), trip_index(route.trip_type));
        cells[di][ti][band].add(e);
        by_trip_type[di][ti].add(e);
        by_direction[di].add(e);
        overall.add(e);
    }
    Ok(GroupElasticityTable {
        bands: bands.clone(),
        cells,
        by_trip_type,
        by_direction,
        overall,
    })
}
