//! Synthetic ticket sales with known elasticities.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    destination_point, write_tables, CellTotal, CpiSeries, Dataset, Direction, FareCategory, InputPaths, Period,
    RawTables, Station, TariffEntry, TariffTable, TicketRow, ZoneTable, MISSING_DISTANCE_KM,
};
use crate::error::{Error, Result};

/// Centre of Perm, where the hub stations sit.
pub const PERM: (f64, f64) = (58.0105, 56.2502);

/// A railway line of evenly spaced stations along a great-circle ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub direction: Direction,
    pub n_stations: usize,
    pub bearing_deg: f64,
    pub first_km: f64,
    pub spacing_km: f64,
    /// Where the ray starts; `None` starts at the centre of Perm.
    pub origin: Option<(f64, f64)>,
    /// Trips run between the line and the hubs as well as along the line.
    pub hub_connected: bool,
    /// Number of leading stations inside the city of Perm.
    pub perm_stations: usize,
}

/// Condition selecting the records of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    Directions(Vec<Direction>),
    FeatureAtMost { feature: String, value: f64 },
    FeatureAbove { feature: String, value: f64 },
}

impl Predicate {
    fn matches(&self, dataset: &Dataset, i: usize) -> Result<bool> {
        Ok(match self {
            Predicate::Always => true,
            Predicate::Directions(ds) => ds.contains(&dataset.route_of(&dataset.records()[i]).direction),
            Predicate::FeatureAtMost { feature, value } => dataset.feature(i, feature)? <= *value,
            Predicate::FeatureAbove { feature, value } => dataset.feature(i, feature)? > *value,
        })
    }
}

/// Demand `log q = log_scale + α log p + γ_s sin + γ_c cos + ε` on the
/// records matching `predicate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub predicate: Predicate,
    pub log_scale: f64,
    pub elasticity: f64,
    pub season_sin: f64,
    pub season_cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FareRule {
    /// Zone-1 full fare in the first year.
    pub base: f64,
    /// Added per zone beyond the first.
    pub per_zone: f64,
    pub annual_growth: f64,
    /// Half-width of a uniform log perturbation drawn per zone and year.
    pub zone_year_jitter: f64,
    /// Regulator cap as a multiple of the fare.
    pub cap_ratio: f64,
}

/// Sales of a fare category on a share of the routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub category: FareCategory,
    pub route_share: f64,
    /// Replaces the segment elasticity when set.
    pub elasticity: Option<f64>,
    pub log_level_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_hubs: usize,
    pub lines: Vec<LineSpec>,
    pub first_year: i32,
    pub last_year: i32,
    pub segments: Vec<Segment>,
    pub noise_sigma: f64,
    pub fare_rule: FareRule,
    pub annual_inflation: f64,
    /// Log-demand shift per km of trip distance, correlating demand with the
    /// zone and hence the fare.
    pub confounding_per_km: Option<f64>,
    pub categories: Vec<CategorySpec>,
}

/// Log scale giving a mean log demand near `level` at `log_price`.
fn scale_for(level: f64, elasticity: f64, log_price: f64) -> f64 {
    level - elasticity * log_price
}

fn line(direction: Direction, n: usize, bearing: f64, first: f64, spacing: f64, perm: usize) -> LineSpec {
    LineSpec {
        direction,
        n_stations: n,
        bearing_deg: bearing,
        first_km: first,
        spacing_km: spacing,
        origin: None,
        hub_connected: true,
        perm_stations: perm,
    }
}

fn direction_segment(name: &str, dirs: Vec<Direction>, elasticity: f64) -> Segment {
    Segment {
        name: name.to_string(),
        predicate: Predicate::Directions(dirs),
        log_scale: scale_for(6.5, elasticity, 4.0),
        elasticity,
        season_sin: -0.2,
        season_cos: -0.3,
    }
}

fn full_single_only() -> Vec<CategorySpec> {
    vec![CategorySpec {
        category: FareCategory::FullSingle,
        route_share: 1.0,
        elasticity: None,
        log_level_shift: 0.0,
    }]
}

impl SynthConfig {
    /// Six directions with elasticities from -1.75 to -0.89 by direction;
    /// the branch line, the only weakly elastic group, carries
    /// a quarter of the records. 840 routes over five years, 50,400 records.
    pub fn calibrated() -> Self {
        let branch_origin = destination_point(PERM.0, PERM.1, 45.0, 100.0);
        SynthConfig {
            seed: 2017,
            n_hubs: 3,
            lines: vec![
                line(Direction::Western, 12, 270.0, 12.0, 15.0, 1),
                line(Direction::Kungur, 12, 200.0, 12.0, 15.0, 1),
                line(Direction::GornozavodskChusovoy, 10, 45.0, 12.0, 17.0, 1),
                line(Direction::GornozavodskKizel, 6, 20.0, 30.0, 25.0, 0),
                LineSpec {
                    direction: Direction::GornozavodskBranch,
                    n_stations: 15,
                    bearing_deg: 75.0,
                    first_km: 10.0,
                    spacing_km: 11.0,
                    origin: Some(branch_origin),
                    hub_connected: false,
                    perm_stations: 0,
                },
            ],
            first_year: 2012,
            last_year: 2016,
            segments: vec![
                direction_segment("western", vec![Direction::Western], -1.75),
                direction_segment("kungur", vec![Direction::Kungur], -1.34),
                direction_segment(
                    "gornozavodsk_main",
                    vec![Direction::GornozavodskChusovoy, Direction::GornozavodskKizel],
                    -1.26,
                ),
                direction_segment("gornozavodsk_branch", vec![Direction::GornozavodskBranch], -0.89),
                direction_segment("agglomeration", vec![Direction::Agglomeration], -1.21),
            ],
            noise_sigma: 0.3,
            fare_rule: FareRule {
                base: 22.0,
                per_zone: 8.0,
                annual_growth: 0.085,
                zone_year_jitter: 0.1,
                cap_ratio: 1.25,
            },
            annual_inflation: 0.07,
            confounding_per_km: None,
            categories: full_single_only(),
        }
    }

    /// Western trips with elasticity −2 against Kungur trips with −0.5.
    pub fn two_segment() -> Self {
        SynthConfig {
            seed: 7,
            n_hubs: 1,
            lines: vec![
                line(Direction::Western, 10, 270.0, 12.0, 18.0, 0),
                line(Direction::Kungur, 10, 200.0, 12.0, 18.0, 0),
            ],
            first_year: 2014,
            last_year: 2016,
            segments: vec![
                direction_segment("western", vec![Direction::Western], -2.0),
                direction_segment("kungur", vec![Direction::Kungur], -0.5),
            ],
            noise_sigma: 0.3,
            fare_rule: FareRule {
                base: 22.0,
                per_zone: 8.0,
                annual_growth: 0.085,
                zone_year_jitter: 0.1,
                cap_ratio: 1.25,
            },
            annual_inflation: 0.07,
            confounding_per_km: None,
            categories: full_single_only(),
        }
    }

    /// One elasticity of −1.981 with demand rising in trip distance, so that
    /// fare and the omitted zone effect move together. 216 routes over four
    /// years, 10,368 records.
    pub fn confounded() -> Self {
        SynthConfig {
            seed: 1981,
            n_hubs: 1,
            lines: vec![
                line(Direction::Western, 8, 270.0, 12.0, 22.0, 0),
                line(Direction::Kungur, 8, 200.0, 12.0, 22.0, 0),
                line(Direction::GornozavodskChusovoy, 8, 45.0, 12.0, 22.0, 0),
            ],
            first_year: 2013,
            last_year: 2016,
            segments: vec![Segment {
                name: "all".into(),
                predicate: Predicate::Always,
                log_scale: scale_for(6.5, -1.981, 4.0),
                elasticity: -1.981,
                season_sin: -0.2,
                season_cos: -0.3,
            }],
            noise_sigma: 0.3,
            fare_rule: FareRule {
                base: 22.0,
                per_zone: 8.0,
                annual_growth: 0.085,
                zone_year_jitter: 0.35,
                cap_ratio: 1.25,
            },
            annual_inflation: 0.07,
            confounding_per_km: Some(0.01),
            categories: full_single_only(),
        }
    }

    /// The two-segment design with Children tickets, whose demand ignores
    /// the fare, sold on a fifth of the routes.
    pub fn with_children() -> Self {
        let mut c = SynthConfig::two_segment();
        c.seed = 11;
        c.categories.push(CategorySpec {
            category: FareCategory::Children,
            route_share: 0.2,
            elasticity: Some(0.0),
            log_level_shift: -1.0,
        });
        c
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Calibrated => SynthConfig::calibrated(),
            Preset::TwoSegment => SynthConfig::two_segment(),
            Preset::Confounded => SynthConfig::confounded(),
            Preset::Children => SynthConfig::with_children(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma {} is negative", self.noise_sigma)));
        }
        if self.first_year > self.last_year {
            return Err(Error::Config("first year after last year".into()));
        }
        if self.lines.is_empty() || self.segments.is_empty() || self.categories.is_empty() {
            return Err(Error::Config("lines, segments and categories must be nonempty".into()));
        }
        if self.n_hubs == 0 && self.lines.iter().any(|l| l.hub_connected) {
            return Err(Error::Config("hub-connected lines need at least one hub".into()));
        }
        for c in &self.categories {
            if !(0.0..=1.0).contains(&c.route_share) {
                return Err(Error::Config(format!(
                    "route share {} of {} is outside [0, 1]",
                    c.route_share, c.category
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Calibrated,
    TwoSegment,
    Confounded,
    Children,
}

impl Preset {
    pub const NAMES: [&'static str; 4] = ["calibrated", "two_segment", "confounded", "children"];
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "calibrated" => Ok(Preset::Calibrated),
            "two_segment" => Ok(Preset::TwoSegment),
            "confounded" => Ok(Preset::Confounded),
            "children" => Ok(Preset::Children),
            other => Err(format!(
                "unknown preset `{other}`; expected one of: {}",
                Preset::NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Calibrated => "calibrated",
            Preset::TwoSegment => "two_segment",
            Preset::Confounded => "confounded",
            Preset::Children => "children",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub key: String,
    pub segment: usize,
    pub segment_name: String,
    pub elasticity: f64,
    /// Log demand before noise and rounding.
    pub log_demand: f64,
}

/// True segment, elasticity and noiseless log demand of every record, in
/// dataset order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
}

impl GroundTruth {
    pub fn elasticities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.elasticity).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,segment,true_elasticity,log_demand\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.key, r.segment_name, r.elasticity, r.log_demand);
        }
        out
    }
}

/// Synthetic tables plus ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub raw: RawTables,
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

impl Synthetic {
    /// Writes the five input CSVs and `ground_truth.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tables(&self.raw, &InputPaths::in_dir(dir))?;
        let p = dir.join("ground_truth.csv");
        fs::write(&p, self.truth.to_csv()).map_err(|e| Error::io(&p, e))
    }
}

const STREAM_STATIONS: u64 = 1;
const STREAM_FARES: u64 = 2;
const STREAM_CATEGORIES: u64 = 3;
const STREAM_NOISE: u64 = 4;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn random_station(rng: &mut ChaCha8Rng, id: String, name: String, direction: Direction, at: (f64, f64)) -> Station {
    let population = if rng.random_bool(0.15) {
        0
    } else {
        (10f64.powf(rng.random_range(1.0..4.7))).round() as u64
    };
    let mut dist = || (rng.random_range(0.1..8.0) * 100.0f64).round() / 100.0;
    let (d1, d2, bus, road) = (dist(), dist(), dist(), dist());
    let imputed = rng.random_bool(0.05);
    let m = |v: f64| if imputed { MISSING_DISTANCE_KM } else { v };
    Station {
        id,
        name,
        direction,
        latitude: at.0,
        longitude: at.1,
        population_within_5km: population,
        dist_nearest_settlement_km: m(d1),
        dist_second_settlement_km: m(d1.max(d2)),
        dist_bus_stop_km: m(bus),
        dist_highway_km: m(road),
        distances_imputed: imputed,
        has_summer_gardens: rng.random_bool(0.3),
        is_perm: false,
        is_agglomeration: false,
    }
}

fn line_prefix(d: Direction) -> &'static str {
    match d {
        Direction::Western => "W",
        Direction::Kungur => "K",
        Direction::GornozavodskChusovoy => "C",
        Direction::GornozavodskKizel => "Z",
        Direction::GornozavodskBranch => "B",
        Direction::Agglomeration => "A",
    }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

/// Builds stations, routes, tariffs, CPI and ticket sales from the
/// configuration, and assembles them through the regular ingestion path.
pub fn generate(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let zones = ZoneTable::standard();

    // Stations.
    let mut srng = rng(config.seed, STREAM_STATIONS);
    let mut stations = Vec::new();
    let mut hubs = Vec::new();
    for h in 0..config.n_hubs {
        let at = if h == 0 {
            PERM
        } else {
            destination_point(PERM.0, PERM.1, 90.0 * h as f64, 4.0 * h as f64)
        };
        let mut s = random_station(
            &mut srng,
            format!("P{}", h + 1),
            format!("Perm {}", h + 1),
            Direction::Agglomeration,
            at,
        );
        s.is_perm = true;
        s.is_agglomeration = true;
        s.population_within_5km = 50_000 + 10_000 * h as u64;
        hubs.push(s.id.clone());
        stations.push(s);
    }
    let mut line_members: Vec<Vec<String>> = Vec::new();
    for l in &config.lines {
        let (lat, lon) = l.origin.unwrap_or(PERM);
        let mut ids = Vec::new();
        for k in 0..l.n_stations {
            let km = l.first_km + l.spacing_km * k as f64;
            let at = destination_point(lat, lon, l.bearing_deg, km);
            let id = format!("{}{:02}", line_prefix(l.direction), k + 1);
            let mut s = random_station(
                &mut srng,
                id.clone(),
                format!("{} {}", l.direction, k + 1),
                l.direction,
                at,
            );
            s.is_perm = k < l.perm_stations;
            ids.push(id);
            stations.push(s);
        }
        line_members.push(ids);
    }

    // Routes: ordered pairs along each line (with the hubs when connected)
    // and between hubs.
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (l, ids) in config.lines.iter().zip(&line_members) {
        let mut nodes = ids.clone();
        if l.hub_connected {
            nodes.extend(hubs.iter().cloned());
        }
        for a in &nodes {
            for b in &nodes {
                if a != b && !(hubs.contains(a) && hubs.contains(b)) {
                    pairs.push((a.clone(), b.clone()));
                }
            }
        }
    }
    for a in &hubs {
        for b in &hubs {
            if a != b {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }

    // Tariffs and CPI.
    let mut frng = rng(config.seed, STREAM_FARES);
    let mut tariffs = TariffTable::default();
    let fr = &config.fare_rule;
    for year in config.first_year..=config.last_year {
        let growth = (1.0 + fr.annual_growth).powi(year - config.first_year);
        let mut previous = 0.0f64;
        for zone in 1..=zones.zone_count() {
            let jitter = if fr.zone_year_jitter > 0.0 {
                frng.random_range(-fr.zone_year_jitter..=fr.zone_year_jitter)
            } else {
                0.0
            };
            let raw = (fr.base + fr.per_zone * (zone - 1) as f64) * growth * jitter.exp();
            let fare = round_to(raw.max(previous), 2);
            previous = fare;
            tariffs.insert(TariffEntry {
                year,
                zone,
                full_fare: fare,
                rst_upper: Some(round_to(fare * fr.cap_ratio, 2)),
            });
        }
    }
    let mut cpi = CpiSeries::new();
    let monthly = (1.0 + config.annual_inflation).powf(1.0 / 12.0);
    let mut index = 100.0;
    for year in config.first_year..=config.last_year {
        for month in 1..=12 {
            cpi.insert(Period::new(year, month), round_to(index, 4))?;
            index *= monthly;
        }
    }

    // Which routes carry which categories.
    let mut crng = rng(config.seed, STREAM_CATEGORIES);
    let carried: Vec<Vec<bool>> = config
        .categories
        .iter()
        .map(|c| {
            pairs
                .iter()
                .map(|_| c.route_share >= 1.0 || crng.random_bool(c.route_share))
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    for (r, (o, d)) in pairs.iter().enumerate() {
        for year in config.first_year..=config.last_year {
            for month in 1..=12 {
                for (ci, c) in config.categories.iter().enumerate() {
                    if carried[ci][r] {
                        cells.push(CellTotal {
                            origin: o.clone(),
                            destination: d.clone(),
                            year,
                            month,
                            fare_category: c.category,
                            tickets: 1,
                            revenue: 0.0,
                        });
                    }
                }
            }
        }
    }
    let skeleton = Dataset::from_cells(
        stations.clone(),
        zones.clone(),
        cpi.clone(),
        tariffs.clone(),
        cells,
        None,
    )?;

    // Demand.
    let mut nrng = rng(config.seed, STREAM_NOISE);
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("noise: {e}")))?;
    let mut tickets = Vec::with_capacity(skeleton.len());
    let mut truth = Vec::with_capacity(skeleton.len());
    for (i, rec) in skeleton.records().iter().enumerate() {
        let mut matched = None;
        for (s, seg) in config.segments.iter().enumerate() {
            if seg.predicate.matches(&skeleton, i)? {
                if let Some(prev) = matched {
                    return Err(Error::Segments(format!(
                        "record {} matches segments {prev} and {s}",
                        skeleton.key(i)
                    )));
                }
                matched = Some(s);
            }
        }
        let s = matched.ok_or_else(|| Error::Segments(format!("no segment covers record {}", skeleton.key(i))))?;
        let seg = &config.segments[s];
        let cat = config
            .categories
            .iter()
            .find(|c| c.category == rec.fare_category)
            .expect("generated category");
        let alpha = cat.elasticity.unwrap_or(seg.elasticity);
        let route = skeleton.route_of(rec);
        let mut q = seg.log_scale
            + cat.log_level_shift
            + alpha * rec.log_real_fare
            + seg.season_sin * skeleton.feature(i, "season_sin")?
            + seg.season_cos * skeleton.feature(i, "season_cos")?;
        if let Some(delta) = config.confounding_per_km {
            q += delta * route.distance_km;
        }
        let eps = if config.noise_sigma > 0.0 {
            noise.sample(&mut nrng)
        } else {
            0.0
        };
        let count = (q + eps).exp().round().clamp(1.0, 1e18) as u64;
        tickets.push(TicketRow {
            origin: route.origin.clone(),
            destination: route.destination.clone(),
            year: rec.year,
            month: rec.month,
            fare_category: rec.fare_category,
            quantity: count,
            nominal_fare: round_to(rec.nominal_fare * rec.fare_category.default_multiplier(), 2),
        });
        truth.push(TruthRow {
            key: skeleton.key(i).to_string(),
            segment: s,
            segment_name: seg.name.clone(),
            elasticity: alpha,
            log_demand: q,
        });
    }

    let raw = RawTables {
        stations,
        tickets,
        tariffs,
        cpi,
        zones,
    };
    let dataset = Dataset::assemble(raw.clone(), None)?;
    Ok(Synthetic {
        raw,
        dataset,
        truth: GroundTruth { rows: truth },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_the_documented_sizes() {
        let p = generate(&SynthConfig::calibrated()).unwrap();
        assert_eq!(p.dataset.routes().len(), 840);
        assert_eq!(p.dataset.len(), 50_400);
        let c = generate(&SynthConfig::confounded()).unwrap();
        assert_eq!(c.dataset.len(), 10_368);
    }

    #[test]
    fn calibrated_preset_truth_shares() {
        let p = generate(&SynthConfig::calibrated()).unwrap();
        let e = p.truth.elasticities();
        let elastic = e.iter().filter(|v| **v < -1.0).count() as f64 / e.len() as f64;
        assert!((elastic - 0.75).abs() < 1e-12);
    }

    #[test]
    fn uncovered_records_are_an_error() {
        let mut c = SynthConfig::two_segment();
        c.segments.pop();
        assert!(matches!(generate(&c), Err(Error::Segments(_))));
    }
}
