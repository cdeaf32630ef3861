use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Railway direction a station or a route belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Western,
    Kungur,
    GornozavodskChusovoy,
    GornozavodskKizel,
    GornozavodskBranch,
    Agglomeration,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Western,
        Direction::Kungur,
        Direction::GornozavodskChusovoy,
        Direction::GornozavodskKizel,
        Direction::GornozavodskBranch,
        Direction::Agglomeration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Western => "Western",
            Direction::Kungur => "Kungur",
            Direction::GornozavodskChusovoy => "GornozavodskChusovoy",
            Direction::GornozavodskKizel => "GornozavodskKizel",
            Direction::GornozavodskBranch => "GornozavodskBranch",
            Direction::Agglomeration => "Agglomeration",
        }
    }

    /// Suffix used in feature and dummy column names.
    pub fn slug(self) -> &'static str {
        match self {
            Direction::Western => "western",
            Direction::Kungur => "kungur",
            Direction::GornozavodskChusovoy => "gz_chusovoy",
            Direction::GornozavodskKizel => "gz_kizel",
            Direction::GornozavodskBranch => "gz_branch",
            Direction::Agglomeration => "agglomeration",
        }
    }

    pub fn index(self) -> usize {
        Direction::ALL.iter().position(|d| *d == self).unwrap()
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' ', '_'], "");
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str().to_ascii_lowercase() == key || d.slug().replace('_', "") == key)
            .ok_or_else(|| format!("unknown direction `{s}`"))
    }
}

/// Ticket fare category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FareCategory {
    FullSingle,
    FullReturn,
    Children,
    PpkRrEmployee,
    FederalDiscount,
    RegionalDiscount,
    Season,
    Student,
    Military,
}

impl FareCategory {
    pub const ALL: [FareCategory; 9] = [
        FareCategory::FullSingle,
        FareCategory::FullReturn,
        FareCategory::Children,
        FareCategory::PpkRrEmployee,
        FareCategory::FederalDiscount,
        FareCategory::RegionalDiscount,
        FareCategory::Season,
        FareCategory::Student,
        FareCategory::Military,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FareCategory::FullSingle => "full_single",
            FareCategory::FullReturn => "full_return",
            FareCategory::Children => "children",
            FareCategory::PpkRrEmployee => "ppk_rr_employee",
            FareCategory::FederalDiscount => "federal_discount",
            FareCategory::RegionalDiscount => "regional_discount",
            FareCategory::Season => "season",
            FareCategory::Student => "student",
            FareCategory::Military => "military",
        }
    }

    /// Default price multiplier relative to the full single fare.
    pub fn default_multiplier(self) -> f64 {
        match self {
            FareCategory::FullSingle | FareCategory::FullReturn | FareCategory::Season => 1.0,
            FareCategory::Children => 0.2,
            FareCategory::PpkRrEmployee => 0.1,
            FareCategory::FederalDiscount
            | FareCategory::RegionalDiscount
            | FareCategory::Student
            | FareCategory::Military => 0.5,
        }
    }
}

impl fmt::Display for FareCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FareCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        FareCategory::ALL
            .into_iter()
            .find(|c| c.code() == key || c.code().replace('_', "") == key.replace('_', ""))
            .ok_or_else(|| format!("unknown fare category `{s}`"))
    }
}

/// Size of the settlement around a station (residents within 5 km).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    None,
    Small,
    Middle,
    Large,
    Huge,
}

impl SizeClass {
    pub const ALL: [SizeClass; 5] = [
        SizeClass::None,
        SizeClass::Small,
        SizeClass::Middle,
        SizeClass::Large,
        SizeClass::Huge,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            SizeClass::None => "none",
            SizeClass::Small => "small",
            SizeClass::Middle => "middle",
            SizeClass::Large => "large",
            SizeClass::Huge => "huge",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Classifies the settlement around a station.
///
/// Intervals are lower-exclusive and upper-inclusive: `(0, 100]` is small,
/// `(100, 1000]` middle, `(1000, 10000]` large and anything above is huge.
pub fn classify_settlement(population_within_5km: u64, settlement_exists: bool) -> SizeClass {
    if !settlement_exists {
        return SizeClass::None;
    }
    match population_within_5km {
        0..=100 => SizeClass::Small,
        101..=1_000 => SizeClass::Middle,
        1_001..=10_000 => SizeClass::Large,
        _ => SizeClass::Huge,
    }
}

/// Relation of a trip to the city of Perm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TripType {
    FromToPerm,
    OutOfPerm,
    WithinPerm,
}

impl TripType {
    pub const ALL: [TripType; 3] = [TripType::FromToPerm, TripType::OutOfPerm, TripType::WithinPerm];

    pub fn from_flags(origin_is_perm: bool, destination_is_perm: bool) -> TripType {
        match (origin_is_perm, destination_is_perm) {
            (true, true) => TripType::WithinPerm,
            (false, false) => TripType::OutOfPerm,
            _ => TripType::FromToPerm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TripType::FromToPerm => "From/to Perm",
            TripType::OutOfPerm => "Out of Perm",
            TripType::WithinPerm => "Within Perm",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            TripType::FromToPerm => "from_to_perm",
            TripType::OutOfPerm => "out_of_perm",
            TripType::WithinPerm => "within_perm",
        }
    }
}

impl fmt::Display for TripType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for TripType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' ', '/'], "_");
        TripType::ALL
            .into_iter()
            .find(|t| t.slug() == key)
            .ok_or_else(|| format!("unknown trip type `{s}`"))
    }
}

/// Imputed value for a missing distance attribute.
pub const MISSING_DISTANCE_KM: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub direction: Direction,
    pub latitude: f64,
    pub longitude: f64,
    pub population_within_5km: u64,
    pub dist_nearest_settlement_km: f64,
    pub dist_second_settlement_km: f64,
    pub dist_bus_stop_km: f64,
    pub dist_highway_km: f64,
    /// At least one distance attribute was missing and imputed.
    pub distances_imputed: bool,
    pub has_summer_gardens: bool,
    pub is_perm: bool,
    pub is_agglomeration: bool,
}

impl Station {
    pub fn size_class(&self) -> SizeClass {
        classify_settlement(self.population_within_5km, self.population_within_5km > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub origin: String,
    pub destination: String,
    pub distance_km: f64,
    pub zone: u32,
    pub direction: Direction,
    pub trip_type: TripType,
}

impl Route {
    /// Direction of a trip between two stations: agglomeration when both
    /// ends are agglomeration-line stations, otherwise the line of the end
    /// that is not on the agglomeration line (the origin's when both are).
    pub fn direction_between(origin: &Station, destination: &Station) -> Direction {
        match (origin.direction, destination.direction) {
            (Direction::Agglomeration, Direction::Agglomeration) => Direction::Agglomeration,
            (Direction::Agglomeration, d) => d,
            (d, _) => d,
        }
    }
}

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Period {
    pub year: i32,
    pub month: u32,
}

impl Period {
    pub fn new(year: i32, month: u32) -> Self {
        Period { year, month }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.year, self.month)
    }
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got `{s}`"))?;
        let year = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in `{s}`"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in `{s}`"));
        }
        Ok(Period { year, month })
    }
}

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance between two points given in decimal degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Point reached travelling `distance_km` from a start point along the
/// great circle with initial `bearing_deg`.
pub fn destination_point(lat: f64, lon: f64, bearing_deg: f64, distance_km: f64) -> (f64, f64) {
    let delta = distance_km / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let p1 = lat.to_radians();
    let l1 = lon.to_radians();
    let p2 = (p1.sin() * delta.cos() + p1.cos() * delta.sin() * theta.cos()).asin();
    let l2 = l1 + (theta.sin() * delta.sin() * p1.cos()).atan2(delta.cos() - p1.sin() * p2.sin());
    (p2.to_degrees(), l2.to_degrees())
}
