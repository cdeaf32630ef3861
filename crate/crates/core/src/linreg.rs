//! Ordinary least squares by Householder QR with rank detection.

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::data::{Dataset, DesignMatrix, FareCategory, Specification};
use crate::error::{Error, Result};

/// Relative tolerance below which a column is treated as linearly
/// dependent on the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Least-squares solution over a set of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    /// One entry per input column; dropped columns hold 0.
    pub coefficients: Vec<f64>,
    /// Indices of the columns kept in the fit, in input order.
    pub kept: Vec<usize>,
    /// Indices of columns dropped as linearly dependent.
    pub dropped: Vec<usize>,
    /// Classical standard errors per input column (NaN for dropped columns,
    /// or when there are no residual degrees of freedom).
    pub standard_errors: Vec<f64>,
    pub residual_sum_squares: f64,
    pub n_obs: usize,
}

impl LeastSquares {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }
}

/// Solves `min ||y - X b||` for column-major `X`.
///
/// Columns are scaled to unit norm and triangularised in input order; a
/// column whose residual norm after projection on the accepted ones falls
/// below `RANK_TOLERANCE` is moved out of the basis. Earlier columns are
/// therefore always preferred.
pub fn least_squares(columns: &[&[f64]], y: &[f64]) -> Result<LeastSquares> {
    let n = y.len();
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has {n}",
            c.len()
        )));
    }
    let mut q: Vec<Vec<f64>> = Vec::new(); // Householder vectors, stored full length
    let mut r_cols: Vec<Vec<f64>> = Vec::new(); // upper triangle of R, column by column
    let mut scales: Vec<f64> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();

    let mut work = vec![0.0; n];
    for (j, col) in columns.iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            dropped.push(j);
            continue;
        }
        for (w, v) in work.iter_mut().zip(col.iter()) {
            *w = v / norm;
        }
        for (k, v) in q.iter().enumerate() {
            apply_reflector(v, k, &mut work);
        }
        let k = q.len();
        let tail = work[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if tail <= RANK_TOLERANCE || k >= n {
            dropped.push(j);
            continue;
        }
        let alpha = if work[k] >= 0.0 { -tail } else { tail };
        let mut v = vec![0.0; n];
        v[k] = work[k] - alpha;
        v[k + 1..].copy_from_slice(&work[k + 1..]);
        let vnorm = v[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v[k..] {
            *x /= vnorm;
        }
        let mut r = work[..k].to_vec();
        r.push(alpha);
        r_cols.push(r);
        q.push(v);
        scales.push(norm);
        kept.push(j);
    }

    let rank = kept.len();
    let mut qty = y.to_vec();
    for (k, v) in q.iter().enumerate() {
        apply_reflector(v, k, &mut qty);
    }
    // Back substitution R z = (Q'y)[..rank].
    let mut z = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for c in i + 1..rank {
            s -= r_cols[c][i] * z[c];
        }
        z[i] = s / r_cols[i][i];
    }
    let mut coefficients = vec![0.0; columns.len()];
    for (slot, &j) in kept.iter().enumerate() {
        coefficients[j] = z[slot] / scales[slot];
    }

    let mut rss = 0.0;
    for i in 0..n {
        let fitted: f64 = kept.iter().map(|&j| columns[j][i] * coefficients[j]).sum();
        let e = y[i] - fitted;
        rss += e * e;
    }

    let mut standard_errors = vec![f64::NAN; columns.len()];
    if n > rank {
        let sigma2 = rss / (n - rank) as f64;
        let rinv = upper_inverse(&r_cols);
        for (slot, &j) in kept.iter().enumerate() {
            let row_sq: f64 = (slot..rank).map(|c| rinv[c][slot].powi(2)).sum();
            standard_errors[j] = (sigma2 * row_sq).sqrt() / scales[slot];
        }
    }

    Ok(LeastSquares {
        coefficients,
        kept,
        dropped,
        standard_errors,
        residual_sum_squares: rss,
        n_obs: n,
    })
}

fn apply_reflector(v: &[f64], k: usize, x: &mut [f64]) {
    let dot: f64 = v[k..].iter().zip(&x[k..]).map(|(a, b)| a * b).sum();
    for (xi, vi) in x[k..].iter_mut().zip(&v[k..]) {
        *xi -= 2.0 * dot * vi;
    }
}

/// Inverse of an upper-triangular matrix stored by columns; the result is
/// also stored by columns (`inv[c][i]` for `i <= c`).
fn upper_inverse(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = r.len();
    let mut inv: Vec<Vec<f64>> = (0..m).map(|c| vec![0.0; c + 1]).collect();
    for c in 0..m {
        inv[c][c] = 1.0 / r[c][c];
        for i in (0..c).rev() {
            let mut s = 0.0;
            for k in i + 1..=c {
                s += r[k][i] * inv[c][k];
            }
            inv[c][i] = -s / r[i][i];
        }
    }
    inv
}

/// Ordered name → value mapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl NamedVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: NamedVector,
    pub standard_errors: NamedVector,
    pub r2: f64,
    pub r2_adjusted: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub residual_sum_squares: f64,
    /// Columns removed as linearly dependent.
    pub dropped: Vec<String>,
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.get(name)
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        self.standard_errors.get(name)
    }

    /// Normal-approximation 95% confidence interval.
    pub fn confidence_interval(&self, name: &str) -> Option<(f64, f64)> {
        let b = self.coefficient(name)?;
        let se = self.standard_error(name)?;
        Some((b - Z_95 * se, b + Z_95 * se))
    }

    /// Price coefficient of the log-log demand equation.
    pub fn price_elasticity(&self) -> Option<f64> {
        self.coefficient("log_real_fare")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct CoefficientTable<'a>(&'a OlsFit);

impl Serialize for CoefficientTable<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry {
            estimate: f64,
            stderr: Option<f64>,
        }
        let fit = self.0;
        let mut map = s.serialize_map(Some(fit.coefficients.len()))?;
        for ((name, estimate), se) in fit.coefficients.iter().zip(&fit.standard_errors.values) {
            let stderr = se.is_finite().then_some(*se);
            map.serialize_entry(name, &Entry { estimate, stderr })?;
        }
        map.end()
    }
}

impl Serialize for OlsFit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("OlsFit", 7)?;
        st.serialize_field("coefficients", &CoefficientTable(self))?;
        st.serialize_field("r2", &self.r2)?;
        st.serialize_field("r2_adjusted", &self.r2_adjusted)?;
        st.serialize_field("n_obs", &self.n_obs)?;
        st.serialize_field("n_params", &self.n_params)?;
        st.serialize_field("residual_sum_squares", &self.residual_sum_squares)?;
        st.serialize_field("dropped", &self.dropped)?;
        st.end()
    }
}

/// OLS of `response` on the design. Linearly dependent columns are dropped
/// and reported; the fit fails when no residual degrees of freedom remain.
pub fn fit_ols(design: &DesignMatrix, response: &[f64]) -> Result<OlsFit> {
    let cols: Vec<&[f64]> = design.columns().iter().map(Vec::as_slice).collect();
    fit_columns(design.column_names(), &cols, response)
}

pub fn fit_columns(names: &[String], columns: &[&[f64]], y: &[f64]) -> Result<OlsFit> {
    if names.len() != columns.len() {
        return Err(Error::Dimension(format!(
            "{} names for {} columns",
            names.len(),
            columns.len()
        )));
    }
    let ls = least_squares(columns, y)?;
    let n = ls.n_obs;
    let p = ls.rank();
    if n <= p || p == 0 {
        return Err(Error::TooFewObservations {
            n_obs: n,
            n_params: p.max(columns.len()),
        });
    }
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let fitted: f64 = ls.kept.iter().map(|&j| columns[j][i] * ls.coefficients[j]).sum();
        residuals.push(y[i] - fitted);
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss = ls.residual_sum_squares;
    let r2 = if tss > 0.0 {
        1.0 - rss / tss
    } else if rss == 0.0 {
        1.0
    } else {
        0.0
    };
    let r2_adjusted = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p) as f64;
    let pick = |v: &[f64]| NamedVector {
        names: ls.kept.iter().map(|&j| names[j].clone()).collect(),
        values: ls.kept.iter().map(|&j| v[j]).collect(),
    };
    Ok(OlsFit {
        coefficients: pick(&ls.coefficients),
        standard_errors: pick(&ls.standard_errors),
        r2,
        r2_adjusted,
        n_obs: n,
        n_params: p,
        residual_sum_squares: rss,
        dropped: ls.dropped.iter().map(|&j| names[j].clone()).collect(),
        residuals,
    })
}

/// Log ticket counts of all records, in record order.
pub fn response(dataset: &Dataset) -> Vec<f64> {
    dataset.records().iter().map(|r| r.log_tickets).collect()
}

/// Fit of one nested specification on all records of the dataset.
pub fn fit_specification(dataset: &Dataset, specification: Specification) -> Result<OlsFit> {
    let design = DesignMatrix::build(dataset, specification)?;
    fit_ols(&design, &response(dataset))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryFits {
    pub fits: BTreeMap<FareCategory, OlsFit>,
    /// Categories left out, with the reason.
    pub skipped: Vec<(FareCategory, String)>,
}

/// Independent fits of a specification on each fare category's records.
pub fn fit_by_fare_category(dataset: &Dataset, specification: Specification) -> Result<CategoryFits> {
    let mut fits = BTreeMap::new();
    let mut skipped = Vec::new();
    for category in dataset.fare_categories() {
        let subset = dataset.with_category(category);
        match fit_specification(&subset, specification) {
            Ok(fit) => {
                fits.insert(category, fit);
            }
            Err(Error::TooFewObservations { n_obs, n_params }) => skipped.push((
                category,
                format!("not estimated: {n_obs} observations for {n_params} parameters"),
            )),
            Err(e) => return Err(e),
        }
    }
    if fits.is_empty() {
        return Err(Error::NoEstimableCategory);
    }
    Ok(CategoryFits { fits, skipped })
}
