use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cpi::{deflate, CpiSeries};
use super::features;
use super::types::{haversine_km, FareCategory, Period, Route, Station, TripType};
use super::zones::ZoneTable;
use crate::error::{Error, Result};

/// Full fares per (year, zone), with optional regulator caps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<TariffEntry>", from = "Vec<TariffEntry>")]
pub struct TariffTable {
    fares: BTreeMap<(i32, u32), TariffEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffEntry {
    pub year: i32,
    pub zone: u32,
    pub full_fare: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rst_upper: Option<f64>,
}

impl From<TariffTable> for Vec<TariffEntry> {
    fn from(t: TariffTable) -> Self {
        t.fares.into_values().collect()
    }
}

impl From<Vec<TariffEntry>> for TariffTable {
    fn from(entries: Vec<TariffEntry>) -> Self {
        let mut t = TariffTable::default();
        for e in entries {
            t.insert(e);
        }
        t
    }
}

impl TariffTable {
    pub fn insert(&mut self, entry: TariffEntry) {
        self.fares.insert((entry.year, entry.zone), entry);
    }

    pub fn full_fare(&self, year: i32, zone: u32) -> Result<f64> {
        self.fares
            .get(&(year, zone))
            .map(|e| e.full_fare)
            .ok_or(Error::MissingTariff { year, zone })
    }

    pub fn entries(&self) -> impl Iterator<Item = &TariffEntry> {
        self.fares.values()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.fares.keys().map(|(y, _)| *y).collect();
        y.dedup();
        y
    }

    pub fn for_year(&self, year: i32) -> Vec<TariffEntry> {
        self.fares
            .range((year, 0)..=(year, u32::MAX))
            .map(|(_, e)| *e)
            .collect()
    }
}

/// One raw ticket-sales row.
#[derive(Debug, Clone, PartialEq)]
pub struct TicketRow {
    pub origin: String,
    pub destination: String,
    pub year: i32,
    pub month: u32,
    pub fare_category: FareCategory,
    pub quantity: u64,
    pub nominal_fare: f64,
}

/// Sales summed over one (route, month, fare category) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTotal {
    pub origin: String,
    pub destination: String,
    pub year: i32,
    pub month: u32,
    pub fare_category: FareCategory,
    pub tickets: u64,
    /// Sum of `quantity * paid fare` over the raw rows.
    pub revenue: f64,
}

/// Input tables before validation and aggregation.
#[derive(Debug, Clone)]
pub struct RawTables {
    pub stations: Vec<Station>,
    pub tickets: Vec<TicketRow>,
    pub tariffs: TariffTable,
    pub cpi: CpiSeries,
    pub zones: ZoneTable,
}

/// Identifies one monthly record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub origin: String,
    pub destination: String,
    pub year: i32,
    pub month: u32,
    pub fare_category: FareCategory,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}>{}:{}-{:02}:{}",
            self.origin, self.destination, self.year, self.month, self.fare_category
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyDemandRecord {
    /// Index into [`Dataset::routes`].
    pub route: usize,
    pub year: i32,
    pub month: u32,
    pub fare_category: FareCategory,
    pub tickets: u64,
    pub log_tickets: f64,
    /// Full fare of the route's zone in that year.
    pub nominal_fare: f64,
    pub real_fare: f64,
    pub log_real_fare: f64,
    pub revenue: f64,
    /// Values aligned with [`features::feature_names`].
    pub features: Vec<f64>,
}

impl MonthlyDemandRecord {
    pub fn period(&self) -> Period {
        Period::new(self.year, self.month)
    }
}

/// Validated monthly route-level observations. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    stations: Vec<Station>,
    station_index: HashMap<String, usize>,
    routes: Vec<Route>,
    records: Vec<MonthlyDemandRecord>,
    zone_table: ZoneTable,
    cpi: CpiSeries,
    tariffs: TariffTable,
    base_period: Period,
}

fn index_stations(stations: &[Station]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(stations.len());
    for (i, s) in stations.iter().enumerate() {
        if index.insert(s.id.clone(), i).is_some() {
            return Err(Error::DuplicateStation(s.id.clone()));
        }
    }
    Ok(index)
}

/// Sums raw rows per (route, month, category) cell. Cells with zero
/// tickets are not materialized.
pub fn aggregate_tickets(rows: &[TicketRow]) -> Vec<CellTotal> {
    let mut cells: BTreeMap<(String, String, i32, u32, FareCategory), (u64, f64)> = BTreeMap::new();
    for r in rows {
        let e = cells
            .entry((
                r.origin.clone(),
                r.destination.clone(),
                r.year,
                r.month,
                r.fare_category,
            ))
            .or_insert((0, 0.0));
        e.0 += r.quantity;
        e.1 += r.quantity as f64 * r.nominal_fare;
    }
    cells
        .into_iter()
        .filter(|(_, (t, _))| *t > 0)
        .map(
            |((origin, destination, year, month, fare_category), (tickets, revenue))| CellTotal {
                origin,
                destination,
                year,
                month,
                fare_category,
                tickets,
                revenue,
            },
        )
        .collect()
}

impl Dataset {
    /// Validates raw tables and aggregates tickets into monthly records.
    ///
    /// `base_period` defaults to the earliest CPI period.
    pub fn assemble(raw: RawTables, base_period: Option<Period>) -> Result<Dataset> {
        let cells = aggregate_tickets(&raw.tickets);
        Dataset::from_cells(raw.stations, raw.zones, raw.cpi, raw.tariffs, cells, base_period)
    }

    pub fn from_cells(
        mut stations: Vec<Station>,
        zone_table: ZoneTable,
        cpi: CpiSeries,
        tariffs: TariffTable,
        mut cells: Vec<CellTotal>,
        base_period: Option<Period>,
    ) -> Result<Dataset> {
        index_stations(&stations)?;
        stations.sort_by(|a, b| a.id.cmp(&b.id));
        let station_index = index_stations(&stations)?;
        let base_period = match base_period.or_else(|| cpi.first_period()) {
            Some(p) => p,
            None if cells.is_empty() => Period::new(1970, 1),
            None => return Err(Error::MissingCpi { year: 0, month: 0 }),
        };

        cells.sort_by(|a, b| {
            (&a.origin, &a.destination, a.year, a.month, a.fare_category).cmp(&(
                &b.origin,
                &b.destination,
                b.year,
                b.month,
                b.fare_category,
            ))
        });

        let mut routes: Vec<Route> = Vec::new();
        let mut route_lookup: HashMap<(String, String), usize> = HashMap::new();
        let mut records = Vec::with_capacity(cells.len());
        for cell in cells {
            if cell.tickets == 0 {
                continue;
            }
            if !(1..=12).contains(&cell.month) {
                return Err(Error::Config(format!("month {} out of range", cell.month)));
            }
            let key = (cell.origin.clone(), cell.destination.clone());
            let route_idx = match route_lookup.get(&key) {
                Some(&i) => i,
                None => {
                    let route = build_route(&stations, &station_index, &cell.origin, &cell.destination, &zone_table)?;
                    routes.push(route);
                    route_lookup.insert(key, routes.len() - 1);
                    routes.len() - 1
                }
            };
            let route = &routes[route_idx];
            let origin = &stations[station_index[&route.origin]];
            let destination = &stations[station_index[&route.destination]];
            let period = Period::new(cell.year, cell.month);
            let nominal_fare = tariffs.full_fare(cell.year, route.zone)?;
            if !(nominal_fare > 0.0) {
                return Err(Error::MissingTariff {
                    year: cell.year,
                    zone: route.zone,
                });
            }
            let real_fare = deflate(nominal_fare, period, &cpi, base_period)?;
            records.push(MonthlyDemandRecord {
                route: route_idx,
                year: cell.year,
                month: cell.month,
                fare_category: cell.fare_category,
                tickets: cell.tickets,
                log_tickets: (cell.tickets as f64).ln(),
                nominal_fare,
                real_fare,
                log_real_fare: real_fare.ln(),
                revenue: cell.revenue,
                features: features::compute(route, origin, destination, cell.year, cell.month),
            });
        }

        Ok(Dataset {
            stations,
            station_index,
            routes,
            records,
            zone_table,
            cpi,
            tariffs,
            base_period,
        })
    }

    pub fn records(&self) -> &[MonthlyDemandRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route_of(&self, record: &MonthlyDemandRecord) -> &Route {
        &self.routes[record.route]
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn station(&self, id: &str) -> Option<&Station> {
        self.station_index.get(id).map(|&i| &self.stations[i])
    }

    pub fn zone_table(&self) -> &ZoneTable {
        &self.zone_table
    }

    pub fn cpi(&self) -> &CpiSeries {
        &self.cpi
    }

    pub fn tariffs(&self) -> &TariffTable {
        &self.tariffs
    }

    pub fn base_period(&self) -> Period {
        self.base_period
    }

    pub fn key(&self, index: usize) -> RecordKey {
        let r = &self.records[index];
        let route = &self.routes[r.route];
        RecordKey {
            origin: route.origin.clone(),
            destination: route.destination.clone(),
            year: r.year,
            month: r.month,
            fare_category: r.fare_category,
        }
    }

    pub fn feature(&self, index: usize, name: &str) -> Result<f64> {
        let i = features::feature_index(name).ok_or_else(|| Error::UnknownFeature(name.into()))?;
        Ok(self.records[index].features[i])
    }

    /// Dataset restricted to the records accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&MonthlyDemandRecord) -> bool) -> Dataset {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Dataset {
            records,
            ..self.clone_without_records()
        }
    }

    pub fn with_category(&self, category: FareCategory) -> Dataset {
        self.filter(|r| r.fare_category == category)
    }

    fn clone_without_records(&self) -> Dataset {
        Dataset {
            stations: self.stations.clone(),
            station_index: self.station_index.clone(),
            routes: self.routes.clone(),
            records: Vec::new(),
            zone_table: self.zone_table.clone(),
            cpi: self.cpi.clone(),
            tariffs: self.tariffs.clone(),
            base_period: self.base_period,
        }
    }

    pub fn fare_categories(&self) -> Vec<FareCategory> {
        let mut c: Vec<FareCategory> = self.records.iter().map(|r| r.fare_category).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn total_tickets(&self) -> u64 {
        self.records.iter().map(|r| r.tickets).sum()
    }

    fn cells(&self) -> Vec<CellTotal> {
        self.records
            .iter()
            .map(|r| {
                let route = &self.routes[r.route];
                CellTotal {
                    origin: route.origin.clone(),
                    destination: route.destination.clone(),
                    year: r.year,
                    month: r.month,
                    fare_category: r.fare_category,
                    tickets: r.tickets,
                    revenue: r.revenue,
                }
            })
            .collect()
    }

    /// Serializes to the self-contained archive format.
    pub fn to_archive_json(&self) -> Result<String> {
        let archive = DatasetArchive {
            format: ARCHIVE_FORMAT.to_string(),
            base_period: self.base_period,
            zone_upper_km: self.zone_table.breakpoints().to_vec(),
            cpi: self.cpi.clone(),
            tariffs: self.tariffs.clone(),
            stations: self.stations.clone(),
            cells: self.cells(),
        };
        Ok(serde_json::to_string(&archive)?)
    }

    pub fn from_archive_json(text: &str) -> Result<Dataset> {
        let archive: DatasetArchive = serde_json::from_str(text)?;
        if archive.format != ARCHIVE_FORMAT {
            return Err(Error::Serde(format!("unsupported archive format `{}`", archive.format)));
        }
        Dataset::from_cells(
            archive.stations,
            ZoneTable::new(archive.zone_upper_km)?,
            archive.cpi,
            archive.tariffs,
            archive.cells,
            Some(archive.base_period),
        )
    }

    /// SHA-256 of the archive serialization.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(sha256_hex(self.to_archive_json()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const ARCHIVE_FORMAT: &str = "railfare-dataset/1";

#[derive(Serialize, Deserialize)]
struct DatasetArchive {
    format: String,
    base_period: Period,
    zone_upper_km: Vec<f64>,
    cpi: CpiSeries,
    tariffs: TariffTable,
    stations: Vec<Station>,
    cells: Vec<CellTotal>,
}

fn build_route(
    stations: &[Station],
    index: &HashMap<String, usize>,
    origin_id: &str,
    destination_id: &str,
    zones: &ZoneTable,
) -> Result<Route> {
    let lookup = |id: &str| {
        index
            .get(id)
            .map(|&i| &stations[i])
            .ok_or_else(|| Error::UnknownStation {
                origin: origin_id.into(),
                destination: destination_id.into(),
                missing: id.into(),
            })
    };
    let origin = lookup(origin_id)?;
    let destination = lookup(destination_id)?;
    if origin_id == destination_id {
        return Err(Error::InvalidRoute {
            origin: origin_id.into(),
            destination: destination_id.into(),
            reason: "origin equals destination".into(),
        });
    }
    let distance_km = haversine_km(
        origin.latitude,
        origin.longitude,
        destination.latitude,
        destination.longitude,
    );
    if !(distance_km > 0.0) {
        return Err(Error::InvalidRoute {
            origin: origin_id.into(),
            destination: destination_id.into(),
            reason: "stations share coordinates".into(),
        });
    }
    let zone = zones.zone_of_distance(distance_km)?;
    Ok(Route {
        origin: origin_id.into(),
        destination: destination_id.into(),
        distance_km,
        zone,
        direction: Route::direction_between(origin, destination),
        trip_type: TripType::from_flags(origin.is_perm, destination.is_perm),
    })
}
