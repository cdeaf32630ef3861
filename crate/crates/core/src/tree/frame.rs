use std::collections::{BTreeMap, HashMap};

use crate::data::{features::feature_names, Dataset};
use crate::error::{Error, Result};

/// Name of the price column every frame built from a dataset carries.
pub const PRICE: &str = "log_real_fare";
pub const INTERCEPT: &str = "intercept";

/// Column-major table of named regressors plus the response, shared by
/// all trees of a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingFrame {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl TrainingFrame {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        for (name, c) in names.iter().zip(&columns) {
            if c.len() != response.len() {
                return Err(Error::Dimension(format!(
                    "column `{name}` has {} rows, response has {}",
                    c.len(),
                    response.len()
                )));
            }
        }
        Ok(TrainingFrame {
            names,
            columns,
            response,
        })
    }

    /// `intercept`, `log_real_fare` and every record feature, with log
    /// ticket counts as the response.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let records = dataset.records();
        let mut names = vec![INTERCEPT.to_string(), PRICE.to_string()];
        names.extend(feature_names().iter().cloned());
        let mut columns = vec![
            vec![1.0; records.len()],
            records.iter().map(|r| r.log_real_fare).collect(),
        ];
        for k in 0..feature_names().len() {
            columns.push(records.iter().map(|r| r.features[k]).collect());
        }
        TrainingFrame {
            names,
            columns,
            response: records.iter().map(|r| r.log_tickets).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn row(&self, row: usize) -> FrameRow<'_> {
        FrameRow { frame: self, row }
    }
}

/// Named access to the attributes of one observation.
pub trait FeatureSource {
    fn feature(&self, name: &str) -> Option<f64>;
}

impl FeatureSource for HashMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl FeatureSource for BTreeMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FrameRow<'a> {
    frame: &'a TrainingFrame,
    row: usize,
}

impl FeatureSource for FrameRow<'_> {
    fn feature(&self, name: &str) -> Option<f64> {
        let i = self.frame.names.iter().position(|n| n == name)?;
        Some(self.frame.columns[i][self.row])
    }
}

/// A source with `log_real_fare` shifted by a constant.
pub struct PriceShifted<'a, S: ?Sized> {
    pub inner: &'a S,
    pub shift: f64,
}

impl<S: FeatureSource + ?Sized> FeatureSource for PriceShifted<'_, S> {
    fn feature(&self, name: &str) -> Option<f64> {
        let v = self.inner.feature(name)?;
        Some(if name == PRICE { v + self.shift } else { v })
    }
}
