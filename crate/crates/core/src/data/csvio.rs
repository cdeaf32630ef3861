//! Reading and writing the five input CSV files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::cpi::CpiSeries;
use super::dataset::{Dataset, RawTables, TariffEntry, TariffTable, TicketRow};
use super::types::{Period, Station, MISSING_DISTANCE_KM};
use super::zones::ZoneTable;
use crate::error::{Error, Result};

/// Locations of the input tables.
#[derive(Debug, Clone)]
pub struct InputPaths {
    pub tickets: PathBuf,
    pub stations: PathBuf,
    pub tariffs: PathBuf,
    pub cpi: PathBuf,
    pub zones: PathBuf,
}

impl InputPaths {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        InputPaths {
            tickets: d.join("tickets.csv"),
            stations: d.join("stations.csv"),
            tariffs: d.join("tariffs.csv"),
            cpi: d.join("cpi.csv"),
            zones: d.join("zones.csv"),
        }
    }

    pub fn all(&self) -> [&PathBuf; 5] {
        [&self.tickets, &self.stations, &self.tariffs, &self.cpi, &self.zones]
    }
}

pub fn ingest(paths: &InputPaths, base_period: Option<Period>) -> Result<Dataset> {
    Dataset::assemble(read_tables(paths)?, base_period)
}

pub fn read_tables(paths: &InputPaths) -> Result<RawTables> {
    let open = |p: &PathBuf| File::open(p).map_err(|e| Error::io(p, e));
    let label = |p: &PathBuf| p.display().to_string();
    // Zones and stations first so that errors in small tables surface early.
    let zones = parse_zones(open(&paths.zones)?, &label(&paths.zones))?;
    let stations = parse_stations(open(&paths.stations)?, &label(&paths.stations))?;
    let tariffs = parse_tariffs(open(&paths.tariffs)?, &label(&paths.tariffs))?;
    let cpi = parse_cpi(open(&paths.cpi)?, &label(&paths.cpi))?;
    let tickets = parse_tickets(open(&paths.tickets)?, &label(&paths.tickets))?;
    Ok(RawTables {
        stations,
        tickets,
        tariffs,
        cpi,
        zones,
    })
}

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(reader: impl Read, file: &str, required: &[&str]) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::malformed(file, 1, e.to_string()))?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
            .collect();
        for col in required {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::malformed(file, 1, format!("missing column `{col}`")));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::malformed(file, line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Table {
            file: file.to_string(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn field<'a>(&self, rec: &'a csv::StringRecord, name: &str) -> &'a str {
        self.col(name).and_then(|i| rec.get(i)).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, name: &str) -> Result<T> {
        let raw = self.field(rec, name);
        raw.parse()
            .map_err(|_| Error::malformed(&self.file, line, format!("invalid {name} `{raw}`")))
    }

    fn optional_f64(&self, line: u64, rec: &csv::StringRecord, name: &str) -> Result<Option<f64>> {
        let raw = self.field(rec, name);
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            return Ok(None);
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::malformed(&self.file, line, format!("invalid {name} `{raw}`")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::malformed(
                &self.file,
                line,
                format!("{name} must be a non-negative number, got `{raw}`"),
            ));
        }
        Ok(Some(v))
    }

    fn flag(&self, line: u64, rec: &csv::StringRecord, name: &str) -> Result<bool> {
        match self.field(rec, name).to_ascii_lowercase().as_str() {
            "" | "0" | "false" | "no" => Ok(false),
            "1" | "true" | "yes" => Ok(true),
            other => Err(Error::malformed(
                &self.file,
                line,
                format!("invalid {name} flag `{other}`"),
            )),
        }
    }
}

pub fn parse_tickets(reader: impl Read, file: &str) -> Result<Vec<TicketRow>> {
    let t = Table::read(
        reader,
        file,
        &[
            "origin_id",
            "destination_id",
            "date",
            "fare_category",
            "quantity",
            "nominal_fare",
        ],
    )?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let date = t.field(rec, "date");
        let (year, month) =
            parse_date(date).ok_or_else(|| Error::malformed(file, line, format!("invalid date `{date}`")))?;
        let category = t.field(rec, "fare_category");
        let fare_category = category.parse().map_err(|e: String| Error::malformed(file, line, e))?;
        let nominal_fare: f64 = t.parse(line, rec, "nominal_fare")?;
        if !nominal_fare.is_finite() || nominal_fare < 0.0 {
            return Err(Error::malformed(file, line, "nominal_fare must be non-negative"));
        }
        let origin = t.field(rec, "origin_id").to_string();
        let destination = t.field(rec, "destination_id").to_string();
        if origin.is_empty() || destination.is_empty() {
            return Err(Error::malformed(file, line, "empty station id"));
        }
        out.push(TicketRow {
            origin,
            destination,
            year,
            month,
            fare_category,
            quantity: t.parse(line, rec, "quantity")?,
            nominal_fare,
        });
    }
    Ok(out)
}

fn parse_date(s: &str) -> Option<(i32, u32)> {
    let mut parts = s.split('-');
    let year: i32 = parts.next()?.parse().ok()?;
    let month: u32 = parts.next()?.parse().ok()?;
    let day: u32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    Some((year, month))
}

pub fn parse_stations(reader: impl Read, file: &str) -> Result<Vec<Station>> {
    let t = Table::read(reader, file, &["id", "name", "direction", "lat", "lon"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let id = t.field(rec, "id");
        if id.is_empty() {
            return Err(Error::malformed(file, line, "empty station id"));
        }
        let direction = t
            .field(rec, "direction")
            .parse()
            .map_err(|e: String| Error::malformed(file, line, e))?;
        let latitude: f64 = t.parse(line, rec, "lat")?;
        let longitude: f64 = t.parse(line, rec, "lon")?;
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::malformed(file, line, "coordinates out of range"));
        }
        let population = t.optional_f64(line, rec, "population_5km")?.unwrap_or(0.0);
        let mut imputed = false;
        let mut distance = |name: &str| -> Result<f64> {
            Ok(match t.optional_f64(line, rec, name)? {
                Some(v) => v,
                None => {
                    imputed = true;
                    MISSING_DISTANCE_KM
                }
            })
        };
        let d1 = distance("dist_settlement1_km")?;
        let d2 = distance("dist_settlement2_km")?;
        let bus = distance("dist_bus_km")?;
        let highway = distance("dist_highway_km")?;
        out.push(Station {
            id: id.to_string(),
            name: t.field(rec, "name").to_string(),
            direction,
            latitude,
            longitude,
            population_within_5km: population.round() as u64,
            dist_nearest_settlement_km: d1,
            dist_second_settlement_km: d2,
            dist_bus_stop_km: bus,
            dist_highway_km: highway,
            distances_imputed: imputed,
            has_summer_gardens: t.flag(line, rec, "summer_gardens")?,
            is_perm: t.flag(line, rec, "is_perm")?,
            is_agglomeration: t.flag(line, rec, "is_agglomeration")?,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for s in &out {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateStation(s.id.clone()));
        }
    }
    Ok(out)
}

pub fn parse_tariffs(reader: impl Read, file: &str) -> Result<TariffTable> {
    let t = Table::read(reader, file, &["year", "zone", "full_fare"])?;
    let mut table = TariffTable::default();
    for (line, rec) in &t.rows {
        let line = *line;
        let full_fare: f64 = t.parse(line, rec, "full_fare")?;
        if !(full_fare > 0.0) || !full_fare.is_finite() {
            return Err(Error::malformed(file, line, "full_fare must be positive"));
        }
        let zone: u32 = t.parse(line, rec, "zone")?;
        if zone == 0 {
            return Err(Error::malformed(file, line, "zones are numbered from 1"));
        }
        table.insert(TariffEntry {
            year: t.parse(line, rec, "year")?,
            zone,
            full_fare,
            rst_upper: t.optional_f64(line, rec, "rst_upper")?,
        });
    }
    Ok(table)
}

pub fn parse_cpi(reader: impl Read, file: &str) -> Result<CpiSeries> {
    let t = Table::read(reader, file, &["year", "month", "index"])?;
    let mut cpi = CpiSeries::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let month: u32 = t.parse(line, rec, "month")?;
        if !(1..=12).contains(&month) {
            return Err(Error::malformed(file, line, format!("month {month} out of range")));
        }
        let index: f64 = t.parse(line, rec, "index")?;
        cpi.insert(Period::new(t.parse(line, rec, "year")?, month), index)
            .map_err(|e| Error::malformed(file, line, e.to_string()))?;
    }
    Ok(cpi)
}

pub fn parse_zones(reader: impl Read, file: &str) -> Result<ZoneTable> {
    let t = Table::read(reader, file, &["zone", "upper_km"])?;
    let mut rows: Vec<(u32, f64, u64)> = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        rows.push((t.parse(*line, rec, "zone")?, t.parse(*line, rec, "upper_km")?, *line));
    }
    rows.sort_by_key(|r| r.0);
    for (i, (zone, _, line)) in rows.iter().enumerate() {
        if *zone != i as u32 + 1 {
            return Err(Error::malformed(
                file,
                *line,
                "zones must be numbered 1..n without gaps",
            ));
        }
    }
    ZoneTable::new(rows.into_iter().map(|r| r.1).collect())
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn io(p: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(p, e)
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

/// Writes the five input tables in the documented schemas.
pub fn write_tables(raw: &RawTables, paths: &InputPaths) -> Result<()> {
    let p = paths.stations.as_path();
    let mut w = csv::Writer::from_writer(create(p)?);
    let csv_err = |e: csv::Error| Error::Serde(format!("{}: {e}", p.display()));
    w.write_record([
        "id",
        "name",
        "direction",
        "lat",
        "lon",
        "population_5km",
        "dist_settlement1_km",
        "dist_settlement2_km",
        "dist_bus_km",
        "dist_highway_km",
        "summer_gardens",
        "is_perm",
        "is_agglomeration",
    ])
    .map_err(csv_err)?;
    for s in &raw.stations {
        let distance = |v: f64| {
            if s.distances_imputed && v == MISSING_DISTANCE_KM {
                String::new()
            } else {
                v.to_string()
            }
        };
        w.write_record([
            s.id.clone(),
            s.name.clone(),
            s.direction.to_string(),
            s.latitude.to_string(),
            s.longitude.to_string(),
            s.population_within_5km.to_string(),
            distance(s.dist_nearest_settlement_km),
            distance(s.dist_second_settlement_km),
            distance(s.dist_bus_stop_km),
            distance(s.dist_highway_km),
            flag(s.has_summer_gardens).to_string(),
            flag(s.is_perm).to_string(),
            flag(s.is_agglomeration).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io(p))?;

    let mut w = create(&paths.tickets)?;
    let p = paths.tickets.as_path();
    writeln!(w, "origin_id,destination_id,date,fare_category,quantity,nominal_fare").map_err(io(p))?;
    for t in &raw.tickets {
        writeln!(
            w,
            "{},{},{}-{:02}-15,{},{},{}",
            t.origin, t.destination, t.year, t.month, t.fare_category, t.quantity, t.nominal_fare
        )
        .map_err(io(p))?;
    }
    w.flush().map_err(io(p))?;

    let mut w = create(&paths.tariffs)?;
    let p = paths.tariffs.as_path();
    let with_caps = raw.tariffs.entries().any(|e| e.rst_upper.is_some());
    if with_caps {
        writeln!(w, "year,zone,full_fare,rst_upper").map_err(io(p))?;
    } else {
        writeln!(w, "year,zone,full_fare").map_err(io(p))?;
    }
    for e in raw.tariffs.entries() {
        match (with_caps, e.rst_upper) {
            (true, Some(cap)) => writeln!(w, "{},{},{},{}", e.year, e.zone, e.full_fare, cap),
            (true, None) => writeln!(w, "{},{},{},", e.year, e.zone, e.full_fare),
            _ => writeln!(w, "{},{},{}", e.year, e.zone, e.full_fare),
        }
        .map_err(io(p))?;
    }
    w.flush().map_err(io(p))?;

    let mut w = create(&paths.cpi)?;
    let p = paths.cpi.as_path();
    writeln!(w, "year,month,index").map_err(io(p))?;
    for (period, index) in raw.cpi.iter() {
        writeln!(w, "{},{},{}", period.year, period.month, index).map_err(io(p))?;
    }
    w.flush().map_err(io(p))?;

    let mut w = create(&paths.zones)?;
    let p = paths.zones.as_path();
    writeln!(w, "zone,upper_km").map_err(io(p))?;
    for (i, upper) in raw.zones.breakpoints().iter().enumerate() {
        writeln!(w, "{},{}", i + 1, upper).map_err(io(p))?;
    }
    w.flush().map_err(io(p))?;
    Ok(())
}
