//! Python bindings for railfare.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use railfare::data::{ingest, share_growth_table, Grouping, InputPaths, Specification};
use railfare::elasticity::{group_elasticity, DistanceBands, ElasticityShares, DEFAULT_INELASTIC_TOLERANCE};
use railfare::forest::{fit_forest, BaggedForest as CoreForest, ForestConfig};
use railfare::linreg::fit_specification;
use railfare::pricing::{ConstantElasticityDemand, DEFAULT_HOLD_BAND};
use railfare::synth::{generate, Preset, SynthConfig};
use railfare::tree::TrainingFrame;

fn err(e: railfare::Error) -> PyErr {
    PyValueError::new_err(format!("[{}] {e}", e.code()))
}

fn usage(e: String) -> PyErr {
    PyValueError::new_err(e)
}

/// Monthly demand records of routes, with stations, tariffs and CPI.
#[pyclass(module = "railfare_py", frozen)]
pub struct Dataset {
    inner: railfare::data::Dataset,
}

#[pymethods]
impl Dataset {
    /// Reads tickets.csv, stations.csv, tariffs.csv, cpi.csv and zones.csv from a directory.
    #[staticmethod]
    fn ingest(dir: PathBuf) -> PyResult<Self> {
        let inner = ingest(&InputPaths::in_dir(dir), None).map_err(err)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let inner = railfare::data::Dataset::from_archive_json(&text).map_err(err)?;
        Ok(Dataset { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let text = self.inner.to_archive_json().map_err(err)?;
        std::fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn fingerprint(&self) -> PyResult<String> {
        self.inner.fingerprint().map_err(err)
    }

    fn total_tickets(&self) -> u64 {
        self.inner.total_tickets()
    }

    /// Record keys in dataset order.
    fn keys(&self) -> Vec<String> {
        (0..self.inner.len()).map(|i| self.inner.key(i).to_string()).collect()
    }

    /// Rows of `(group, year, count, growth_pct, share_pct)`.
    #[pyo3(signature = (grouping = "direction"))]
    fn share_growth(&self, grouping: &str) -> PyResult<Vec<(String, i32, u64, Option<f64>, f64)>> {
        let g: Grouping = grouping.parse().map_err(usage)?;
        Ok(share_growth_table(&self.inner, g)
            .into_iter()
            .map(|r| (r.group, r.year, r.count, r.growth_pct, r.share_pct))
            .collect())
    }

    /// OLS fit of one specification (`I` to `IV`) as a dict.
    #[pyo3(signature = (spec = "IV"))]
    fn ols(&self, spec: &str) -> PyResult<BTreeMap<String, f64>> {
        let s: Specification = spec.parse().map_err(usage)?;
        let fit = fit_specification(&self.inner, s).map_err(err)?;
        let mut out = BTreeMap::new();
        out.insert("elasticity".into(), fit.price_elasticity().unwrap_or(f64::NAN));
        out.insert("stderr".into(), fit.standard_error("log_real_fare").unwrap_or(f64::NAN));
        out.insert("r2".into(), fit.r2);
        out.insert("n_obs".into(), fit.n_obs as f64);
        out.insert("n_params".into(), fit.n_params as f64);
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(records={}, routes={})",
            self.inner.len(),
            self.inner.routes().len()
        )
    }
}

/// Synthetic dataset of a preset and its true per-record elasticities.
#[pyfunction]
#[pyo3(signature = (preset = "calibrated", seed = None, out_dir = None))]
fn synthesize(preset: &str, seed: Option<u64>, out_dir: Option<PathBuf>) -> PyResult<(Dataset, Vec<f64>)> {
    let p: Preset = preset.parse().map_err(usage)?;
    let mut config = SynthConfig::preset(p);
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    let s = generate(&config).map_err(err)?;
    if let Some(dir) = out_dir {
        s.write(&dir).map_err(err)?;
    }
    Ok((Dataset { inner: s.dataset }, s.truth.elasticities()))
}

/// Bagged ensemble of model trees.
#[pyclass(module = "railfare_py", frozen)]
pub struct Forest {
    inner: CoreForest,
}

#[pymethods]
impl Forest {
    #[staticmethod]
    #[pyo3(signature = (dataset, n_trees = 2000, subsample = 0.75, seed = 0, improvement_tolerance = None))]
    fn fit(
        py: Python<'_>,
        dataset: &Dataset,
        n_trees: usize,
        subsample: f64,
        seed: u64,
        improvement_tolerance: Option<f64>,
    ) -> PyResult<Self> {
        let mut config = ForestConfig {
            n_trees,
            subsample_fraction: subsample,
            seed,
            ..ForestConfig::default()
        };
        if let Some(t) = improvement_tolerance {
            config.tree.improvement_tolerance = t;
        }
        let inner = py.detach(|| fit_forest(&dataset.inner, &config)).map_err(err)?;
        Ok(Forest { inner })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Forest {
            inner: CoreForest::load(&dir).map_err(err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.trees().len()
    }

    fn cv_r2(&self, dataset: &Dataset) -> PyResult<f64> {
        self.inner
            .cv_r2(&TrainingFrame::from_dataset(&dataset.inner))
            .map_err(err)
    }

    fn oob_predictions(&self, dataset: &Dataset) -> PyResult<Vec<Option<f64>>> {
        self.inner
            .oob_predictions(&TrainingFrame::from_dataset(&dataset.inner))
            .map_err(err)
    }

    /// Rows of `(variable, splits, share)`, largest share first.
    fn importance(&self) -> Vec<(String, usize, f64)> {
        self.inner
            .variable_importance()
            .entries
            .into_iter()
            .map(|e| (e.variable, e.splits, e.share))
            .collect()
    }

    /// Per-record elasticities from a relative fare change.
    #[pyo3(signature = (dataset, perturbation = 0.10))]
    fn elasticities(&self, py: Python<'_>, dataset: &Dataset, perturbation: f64) -> PyResult<Vec<f64>> {
        let frame = TrainingFrame::from_dataset(&dataset.inner);
        py.detach(|| railfare::elasticity::elasticities(&self.inner, &frame, perturbation))
            .map_err(err)
    }
}

/// Shares of elastic, weakly elastic, inelastic and positive values.
#[pyfunction]
#[pyo3(signature = (values, tolerance = DEFAULT_INELASTIC_TOLERANCE))]
fn elasticity_shares(values: Vec<f64>, tolerance: f64) -> BTreeMap<&'static str, f64> {
    let s = ElasticityShares::classify(&values, tolerance);
    BTreeMap::from([
        ("elastic", s.elastic),
        ("weakly_elastic", s.weakly_elastic),
        ("inelastic", s.inelastic),
        ("positive", s.positive),
    ])
}

/// Mean elasticity by direction over the default zone bands.
#[pyfunction]
fn direction_means(values: Vec<f64>, dataset: &Dataset) -> PyResult<BTreeMap<String, Option<f64>>> {
    let table = group_elasticity(&values, &dataset.inner, &DistanceBands::default()).map_err(err)?;
    Ok(railfare::data::Direction::ALL
        .iter()
        .map(|d| (d.to_string(), table.direction_mean(*d).mean()))
        .collect())
}

/// `reduce`, `increase` or `hold`.
#[pyfunction]
#[pyo3(signature = (elasticity, hold_band = DEFAULT_HOLD_BAND))]
fn recommend_direction(elasticity: f64, hold_band: f64) -> String {
    railfare::pricing::recommend_direction(elasticity, hold_band).to_string()
}

/// Margin-maximising price of constant-elasticity demand within bounds.
#[pyfunction]
#[pyo3(signature = (elasticity, lower, upper, marginal_cost = 0.0, current = None, scale = 1.0))]
fn optimal_tariff(
    elasticity: f64,
    lower: f64,
    upper: f64,
    marginal_cost: f64,
    current: Option<f64>,
    scale: f64,
) -> PyResult<f64> {
    let demand = ConstantElasticityDemand { scale, elasticity };
    railfare::pricing::optimal_tariff(demand, (lower, upper), marginal_cost, current.unwrap_or(lower)).map_err(err)
}

#[pymodule]
fn railfare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Forest>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(elasticity_shares, m)?)?;
    m.add_function(wrap_pyfunction!(direction_means, m)?)?;
    m.add_function(wrap_pyfunction!(recommend_direction, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_tariff, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
