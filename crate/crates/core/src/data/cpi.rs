use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::types::Period;
use crate::error::{Error, Result};

/// Month-indexed consumer price index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<CpiEntry>", from = "Vec<CpiEntry>")]
pub struct CpiSeries {
    values: BTreeMap<Period, f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CpiEntry {
    pub year: i32,
    pub month: u32,
    pub index: f64,
}

impl From<CpiSeries> for Vec<CpiEntry> {
    fn from(s: CpiSeries) -> Self {
        s.iter()
            .map(|(p, index)| CpiEntry {
                year: p.year,
                month: p.month,
                index,
            })
            .collect()
    }
}

impl From<Vec<CpiEntry>> for CpiSeries {
    fn from(entries: Vec<CpiEntry>) -> Self {
        CpiSeries {
            values: entries
                .into_iter()
                .map(|e| (Period::new(e.year, e.month), e.index))
                .collect(),
        }
    }
}

impl CpiSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, period: Period, index: f64) -> Result<()> {
        if !(index > 0.0) || !index.is_finite() {
            return Err(Error::Config(format!("CPI for {period} must be positive, got {index}")));
        }
        self.values.insert(period, index);
        Ok(())
    }

    pub fn get(&self, period: Period) -> Result<f64> {
        self.values.get(&period).copied().ok_or(Error::MissingCpi {
            year: period.year,
            month: period.month,
        })
    }

    pub fn first_period(&self) -> Option<Period> {
        self.values.keys().next().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Period, f64)> + '_ {
        self.values.iter().map(|(p, v)| (*p, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Converts a nominal fare to base-period prices:
/// `nominal * cpi(base) / cpi(period)`.
pub fn deflate(nominal: f64, period: Period, cpi: &CpiSeries, base: Period) -> Result<f64> {
    let at_base = cpi.get(base)?;
    let at_period = cpi.get(period)?;
    Ok(nominal * (at_base / at_period))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_base_period() {
        let mut cpi = CpiSeries::new();
        cpi.insert(Period::new(2014, 1), 104.2).unwrap();
        let base = Period::new(2014, 1);
        assert_eq!(deflate(26.0, base, &cpi, base).unwrap(), 26.0);
    }

    #[test]
    fn deflates_by_index_ratio() {
        let mut cpi = CpiSeries::new();
        cpi.insert(Period::new(2012, 1), 100.0).unwrap();
        cpi.insert(Period::new(2013, 6), 108.5).unwrap();
        let real = deflate(26.0, Period::new(2013, 6), &cpi, Period::new(2012, 1)).unwrap();
        // 26 * 100 / 108.5
        assert!((real - 23.963133640552996).abs() < 1e-12);
    }

    #[test]
    fn tariff_growth_matching_inflation_keeps_real_fare_constant() {
        let mut cpi = CpiSeries::new();
        let base = Period::new(2012, 1);
        let mut fares = Vec::new();
        for (i, year) in (2012..=2017).enumerate() {
            let factor = 1.085f64.powi(i as i32);
            cpi.insert(Period::new(year, 1), 100.0 * factor).unwrap();
            fares.push((year, 26.0 * factor));
        }
        for (year, nominal) in fares {
            let real = deflate(nominal, Period::new(year, 1), &cpi, base).unwrap();
            assert!((real - 26.0).abs() < 1e-9, "{year}: {real}");
        }
    }

    #[test]
    fn missing_entry_names_the_period() {
        let cpi = CpiSeries::new();
        let err = deflate(1.0, Period::new(2015, 3), &cpi, Period::new(2015, 3)).unwrap_err();
        assert_eq!(err.to_string(), "missing CPI entry for 2015-03");
    }

    #[test]
    fn rejects_non_positive_index() {
        let mut cpi = CpiSeries::new();
        assert!(cpi.insert(Period::new(2015, 3), 0.0).is_err());
    }
}
