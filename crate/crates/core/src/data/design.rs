use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::features::{characteristic_names, feature_index};
use super::types::Direction;
use crate::error::{Error, Result};

/// Nested OLS specifications of the aggregate demand equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Specification {
    /// Intercept and log real fare.
    I,
    /// I plus year, month and tariff-zone fixed effects.
    II,
    /// II plus direction fixed effects.
    III,
    /// III plus trip and station characteristics.
    IV,
}

impl Specification {
    pub const ALL: [Specification; 4] = [
        Specification::I,
        Specification::II,
        Specification::III,
        Specification::IV,
    ];
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Specification::I => "I",
            Specification::II => "II",
            Specification::III => "III",
            Specification::IV => "IV",
        };
        f.write_str(s)
    }
}

impl FromStr for Specification {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Specification::I),
            "II" | "2" => Ok(Specification::II),
            "III" | "3" => Ok(Specification::III),
            "IV" | "4" => Ok(Specification::IV),
            other => Err(format!("unknown specification `{other}` (expected I, II, III or IV)")),
        }
    }
}

/// Column-major regressor matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    column_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
    specification: Option<Specification>,
    /// Dropped dummy levels and constant-zero columns.
    notes: Vec<String>,
}

impl DesignMatrix {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if let Some((name, c)) = names.iter().zip(&columns).find(|(_, c)| c.len() != n_rows) {
            return Err(Error::Dimension(format!(
                "column `{name}` has {} rows, expected {n_rows}",
                c.len()
            )));
        }
        Ok(DesignMatrix {
            column_names: names,
            columns,
            n_rows,
            specification: None,
            notes: Vec::new(),
        })
    }

    /// Layout of one of the nested specifications over all records.
    pub fn build(dataset: &Dataset, specification: Specification) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let records = dataset.records();
        let n = records.len();
        let mut b = Builder::new(n);
        b.push("intercept", vec![1.0; n]);
        b.push("log_real_fare", records.iter().map(|r| r.log_real_fare).collect());

        if specification >= Specification::II {
            let years: Vec<i32> = records.iter().map(|r| r.year).collect();
            let (lo, hi) = (*years.iter().min().unwrap(), *years.iter().max().unwrap());
            b.dummies("year", &years, (lo..=hi).collect(), lo);
            let months: Vec<u32> = records.iter().map(|r| r.month).collect();
            b.dummies("month", &months, (1..=12).collect(), 1);
            let zones: Vec<u32> = records.iter().map(|r| dataset.route_of(r).zone).collect();
            b.dummies("zone", &zones, (1..=dataset.zone_table().zone_count()).collect(), 1);
        }
        if specification >= Specification::III {
            let dirs: Vec<usize> = records.iter().map(|r| dataset.route_of(r).direction.index()).collect();
            let mut b_dirs = Vec::new();
            for d in Direction::ALL {
                b_dirs.push(d.index());
            }
            b.dummies_named("direction", &dirs, b_dirs, Direction::Western.index(), |i| {
                Direction::ALL[i].to_string()
            });
        }
        if specification >= Specification::IV {
            for name in characteristic_names() {
                let idx = feature_index(&name).expect("characteristic is a feature");
                b.push(&name, records.iter().map(|r| r.features[idx]).collect());
            }
        }
        Ok(b.finish(Some(specification)))
    }

    /// Design made of named record features (plus `intercept` and
    /// `log_real_fare`, which are always available).
    pub fn from_features(dataset: &Dataset, names: &[&str]) -> Result<Self> {
        let records = dataset.records();
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let col = match *name {
                "intercept" => vec![1.0; records.len()],
                "log_real_fare" => records.iter().map(|r| r.log_real_fare).collect(),
                other => {
                    let i = feature_index(other).ok_or_else(|| Error::UnknownFeature(other.into()))?;
                    records.iter().map(|r| r.features[i]).collect()
                }
            };
            cols.push(col);
        }
        DesignMatrix::from_columns(names.iter().map(|s| s.to_string()).collect(), cols)
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn specification(&self) -> Option<Specification> {
        self.specification
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// Adds a column; used to test nesting of designs.
    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "column `{name}` has {} rows, expected {}",
                values.len(),
                self.n_rows
            )));
        }
        self.column_names.push(name.to_string());
        self.columns.push(values);
        Ok(self)
    }
}

struct Builder {
    n: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    notes: Vec<String>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Builder {
            n,
            names: Vec::new(),
            columns: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.n);
        if values.iter().all(|v| *v == 0.0) {
            self.notes.push(format!("{name}: constant zero, dropped"));
            return;
        }
        self.names.push(name.to_string());
        self.columns.push(values);
    }

    fn dummies<T: Copy + Ord + fmt::Display>(&mut self, prefix: &str, values: &[T], domain: Vec<T>, reference: T) {
        self.dummies_named(prefix, values, domain, reference, |v| v.to_string());
    }

    /// Drop-one dummies over `domain`. The reference level is `reference`
    /// when observed, else the smallest observed level. Unobserved levels
    /// are dropped and noted.
    fn dummies_named<T: Copy + Ord>(
        &mut self,
        prefix: &str,
        values: &[T],
        domain: Vec<T>,
        reference: T,
        label: impl Fn(T) -> String,
    ) {
        let observed: BTreeSet<T> = values.iter().copied().collect();
        let reference = if observed.contains(&reference) {
            reference
        } else {
            let fallback = *observed.iter().next().expect("non-empty");
            self.notes.push(format!(
                "{prefix}: reference level {} not observed, using {}",
                label(reference),
                label(fallback)
            ));
            fallback
        };
        let mut levels: BTreeSet<T> = domain.into_iter().collect();
        levels.extend(observed.iter().copied());
        for level in levels {
            if level == reference {
                continue;
            }
            let name = format!("{prefix}_{}", label(level));
            if !observed.contains(&level) {
                self.notes.push(format!("{name}: no observations, dropped"));
                continue;
            }
            self.names.push(name);
            self.columns
                .push(values.iter().map(|v| if *v == level { 1.0 } else { 0.0 }).collect());
        }
    }

    fn finish(self, specification: Option<Specification>) -> DesignMatrix {
        DesignMatrix {
            column_names: self.names,
            columns: self.columns,
            n_rows: self.n,
            specification,
            notes: self.notes,
        }
    }
}
