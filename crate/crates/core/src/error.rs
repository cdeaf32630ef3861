use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Malformed { file: String, line: u64, message: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate station id `{0}`")]
    DuplicateStation(String),

    #[error("route {origin} -> {destination} references unknown station `{missing}`")]
    UnknownStation {
        origin: String,
        destination: String,
        missing: String,
    },

    #[error("invalid route {origin} -> {destination}: {reason}")]
    InvalidRoute {
        origin: String,
        destination: String,
        reason: String,
    },

    #[error("distance {distance_km:.3} km exceeds the last zone breakpoint {last_km} km")]
    DistanceBeyondZones { distance_km: f64, last_km: f64 },

    #[error("zone table: {0}")]
    ZoneTable(String),

    #[error("missing CPI entry for {year}-{month:02}")]
    MissingCpi { year: i32, month: u32 },

    #[error("no tariff for year {year}, zone {zone}")]
    MissingTariff { year: i32, zone: u32 },

    #[error("not enough observations: {n_obs} observations for {n_params} parameters")]
    TooFewObservations { n_obs: usize, n_params: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no fare category has enough observations to estimate")]
    NoEstimableCategory,

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no record has an out-of-bag prediction")]
    NoOutOfBag,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("zone {zone} is not covered by any distance band for {trip_type}")]
    UncoveredZone { zone: u32, trip_type: String },

    #[error("tariff schedule, zone {zone}: {reason}")]
    Schedule { zone: u32, reason: String },

    #[error("synthetic segments: {0}")]
    Segments(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Stable code used as the prefix of CLI error messages.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Malformed { .. } => "E100",
            Error::Io { .. } => "E101",
            Error::DuplicateStation(_) => "E102",
            Error::UnknownStation { .. } => "E103",
            Error::InvalidRoute { .. } => "E104",
            Error::DistanceBeyondZones { .. } => "E105",
            Error::ZoneTable(_) => "E106",
            Error::MissingCpi { .. } => "E107",
            Error::MissingTariff { .. } => "E108",
            Error::TooFewObservations { .. } => "E200",
            Error::Dimension(_) => "E201",
            Error::NoEstimableCategory => "E202",
            Error::UnknownFeature(_) => "E300",
            Error::Config(_) => "E301",
            Error::NoOutOfBag => "E400",
            Error::EmptyDataset => "E401",
            Error::UncoveredZone { .. } => "E500",
            Error::Schedule { .. } => "E600",
            Error::Segments(_) => "E700",
            Error::Serde(_) => "E800",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(file: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Malformed {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
