use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper distance bounds (km) of consecutive tariff zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTable {
    upper_km: Vec<f64>,
}

impl ZoneTable {
    pub fn new(upper_km: Vec<f64>) -> Result<Self> {
        if upper_km.is_empty() {
            return Err(Error::ZoneTable("no zones".into()));
        }
        if upper_km[0] <= 0.0 || !upper_km[0].is_finite() {
            return Err(Error::ZoneTable("first breakpoint must be positive".into()));
        }
        if let Some(w) = upper_km.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::ZoneTable(format!(
                "breakpoints must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(ZoneTable { upper_km })
    }

    /// Breakpoints used by the regional operator: 17 zones of 12-15 km.
    pub fn standard() -> Self {
        ZoneTable::new(vec![
            13.0, 25.0, 38.0, 50.0, 63.0, 75.0, 88.0, 100.0, 113.0, 125.0, 138.0, 150.0, 163.0, 175.0, 188.0, 200.0,
            215.0,
        ])
        .expect("standard table is valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.upper_km
    }

    pub fn zone_count(&self) -> u32 {
        self.upper_km.len() as u32
    }

    pub fn zone_of_distance(&self, distance_km: f64) -> Result<u32> {
        zone_of_distance(distance_km, &self.upper_km)
    }
}

/// One-based index of the first breakpoint that is `>= distance_km`.
///
/// Zones are `(previous, upper]` intervals, so a distance equal to a
/// breakpoint belongs to the lower zone.
pub fn zone_of_distance(distance_km: f64, upper_km: &[f64]) -> Result<u32> {
    if !(distance_km > 0.0) {
        return Err(Error::ZoneTable(format!(
            "distance must be positive, got {distance_km}"
        )));
    }
    let idx = upper_km.partition_point(|&b| b < distance_km);
    if idx == upper_km.len() {
        return Err(Error::DistanceBeyondZones {
            distance_km,
            last_km: upper_km.last().copied().unwrap_or(0.0),
        });
    }
    Ok(idx as u32 + 1)
}
