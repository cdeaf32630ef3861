//! Domain types, ingestion of the raw sales tables, and design matrices.

mod cpi;
mod csvio;
mod dataset;
mod describe;
mod design;
pub mod features;
mod types;
mod zones;

pub use cpi::{deflate, CpiEntry, CpiSeries};
pub use csvio::{
    ingest, parse_cpi, parse_stations, parse_tariffs, parse_tickets, parse_zones, read_tables, write_tables, InputPaths,
};
pub use dataset::{
    aggregate_tickets, sha256_hex, CellTotal, Dataset, MonthlyDemandRecord, RawTables, RecordKey, TariffEntry,
    TariffTable, TicketRow,
};
pub use describe::{settlement_pair_matrix, share_growth_table, Grouping, SettlementMatrix, ShareGrowthRow};
pub use design::{DesignMatrix, Specification};
pub use types::{
    classify_settlement, destination_point, haversine_km, Direction, FareCategory, Period, Route, SizeClass, Station,
    TripType, MISSING_DISTANCE_KM,
};
pub use zones::{zone_of_distance, ZoneTable};
