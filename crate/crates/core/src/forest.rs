//! Bagged model trees with out-of-bag evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tree::{self, CompiledTree, FeatureSource, ModelTree, PriceShifted, TrainingFrame, TreeConfig};

pub const FOREST_SCHEMA: &str = "railfare-forest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    /// Draw each training sample with replacement instead of as a subset.
    pub with_replacement: bool,
    pub seed: u64,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 2000,
            subsample_fraction: 0.75,
            with_replacement: false,
            seed: 0,
            tree: TreeConfig::default(),
        }
    }
}

impl ForestConfig {
    /// Training-sample size for `n_records` observations.
    pub fn sample_size(&self, n_records: usize) -> usize {
        (self.subsample_fraction * n_records as f64).round() as usize
    }

    /// Seed of tree `b` (counted from 1).
    pub fn tree_seed(&self, b: usize) -> u64 {
        self.seed.wrapping_add(b as u64)
    }
}

/// Fixed-size set of record indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    words: Vec<u64>,
    len: usize,
}

impl Membership {
    pub fn new(len: usize) -> Self {
        Membership {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        hex::encode(bytes)
    }

    pub fn from_hex(text: &str, len: usize) -> Result<Self> {
        let bytes = hex::decode(text).map_err(|e| Error::Serde(format!("membership bitmap: {e}")))?;
        if bytes.len() != len.div_ceil(64) * 8 {
            return Err(Error::Serde("membership bitmap has the wrong length".into()));
        }
        let words = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Membership { words, len })
    }
}

/// Training rows of tree `b` (sorted, duplicates kept when resampling with
/// replacement).
pub fn draw_sample(config: &ForestConfig, n_records: usize, b: usize) -> Vec<usize> {
    let m = config.sample_size(n_records);
    let mut rng = ChaCha8Rng::seed_from_u64(config.tree_seed(b));
    let mut rows: Vec<usize> = if config.with_replacement {
        (0..m).map(|_| rng.random_range(0..n_records)).collect()
    } else {
        sample(&mut rng, n_records, m).into_vec()
    };
    rows.sort_unstable();
    rows
}

#[derive(Debug, Clone)]
pub struct BaggedForest {
    config: ForestConfig,
    trees: Vec<ModelTree>,
    memberships: Vec<Membership>,
    n_records: usize,
    dataset_fingerprint: Option<String>,
}

/// Trains the ensemble on every record of the dataset.
pub fn fit_forest(dataset: &Dataset, config: &ForestConfig) -> Result<BaggedForest> {
    let frame = TrainingFrame::from_dataset(dataset);
    let mut forest = fit_forest_frame(&frame, config, None)?;
    forest.dataset_fingerprint = Some(dataset.fingerprint()?);
    Ok(forest)
}

/// Trains the ensemble on a frame. `threads` bounds the worker pool; the
/// result does not depend on it.
pub fn fit_forest_frame(frame: &TrainingFrame, config: &ForestConfig, threads: Option<usize>) -> Result<BaggedForest> {
    let n = frame.n_rows();
    if config.n_trees == 0 {
        return Err(Error::Config("the forest needs at least one tree".into()));
    }
    if !(config.subsample_fraction > 0.0 && config.subsample_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "subsample fraction {} is outside (0, 1]",
            config.subsample_fraction
        )));
    }
    let min_leaf = config.tree.effective_min_leaf();
    if n < 2 * min_leaf {
        return Err(Error::TooFewObservations {
            n_obs: n,
            n_params: 2 * min_leaf,
        });
    }
    let m = config.sample_size(n);
    config.tree.validate(m)?;
    let presort = if config.with_replacement {
        None
    } else {
        Some(tree::presort(frame, &config.tree)?)
    };

    let grow_one = |b: usize| -> Result<(ModelTree, Membership)> {
        let rows = draw_sample(config, n, b);
        let mut t = match &presort {
            Some(ps) => tree::grow_tree_presorted(frame, &rows, &config.tree, ps)?,
            None => tree::grow_tree(frame, &rows, &config.tree)?,
        };
        t.discard_record_indices();
        let mut membership = Membership::new(n);
        for &r in &rows {
            membership.insert(r);
        }
        Ok((t, membership))
    };
    let run =
        || -> Result<Vec<(ModelTree, Membership)>> { (1..=config.n_trees).into_par_iter().map(grow_one).collect() };
    let grown = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let (trees, memberships) = grown.into_iter().unzip();
    Ok(BaggedForest {
        config: config.clone(),
        trees,
        memberships,
        n_records: n,
        dataset_fingerprint: None,
    })
}

impl BaggedForest {
    /// Assembles a forest from parts, e.g. for hand-built fixtures.
    pub fn from_parts(config: ForestConfig, trees: Vec<ModelTree>, memberships: Vec<Membership>) -> Result<Self> {
        if trees.len() != memberships.len() || trees.is_empty() {
            return Err(Error::Dimension(format!(
                "{} trees for {} memberships",
                trees.len(),
                memberships.len()
            )));
        }
        let n_records = memberships[0].universe();
        if memberships.iter().any(|m| m.universe() != n_records) {
            return Err(Error::Dimension("memberships cover different record counts".into()));
        }
        Ok(BaggedForest {
            config,
            trees,
            memberships,
            n_records,
            dataset_fingerprint: None,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[ModelTree] {
        &self.trees
    }

    pub fn memberships(&self) -> &[Membership] {
        &self.memberships
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn dataset_fingerprint(&self) -> Option<&str> {
        self.dataset_fingerprint.as_deref()
    }

    pub fn set_dataset_fingerprint(&mut self, fingerprint: String) {
        self.dataset_fingerprint = Some(fingerprint);
    }

    pub fn compile(&self, frame: &TrainingFrame) -> Result<Vec<CompiledTree>> {
        self.trees.iter().map(|t| t.compile(frame)).collect()
    }

    /// Mean prediction of all trees.
    pub fn predict_mean(&self, source: &(impl FeatureSource + ?Sized)) -> Result<f64> {
        let mut s = 0.0;
        for t in &self.trees {
            s += t.predict(source)?;
        }
        Ok(s / self.trees.len() as f64)
    }

    /// Mean prediction with the log price shifted by `price_shift`.
    pub fn predict_mean_shifted(&self, source: &(impl FeatureSource + ?Sized), price_shift: f64) -> Result<f64> {
        self.predict_mean(&PriceShifted {
            inner: source,
            shift: price_shift,
        })
    }

    /// `predict_mean` for every frame row, with the log price shifted by
    /// `price_shift`.
    pub fn predict_mean_rows(&self, frame: &TrainingFrame, price_shift: f64) -> Result<Vec<f64>> {
        self.predict_mean_with_shifts(frame, &vec![price_shift; frame.n_rows()])
    }

    /// `predict_mean` for every frame row, with a per-row log price shift.
    pub fn predict_mean_with_shifts(&self, frame: &TrainingFrame, shifts: &[f64]) -> Result<Vec<f64>> {
        if shifts.len() != frame.n_rows() {
            return Err(Error::Dimension(format!(
                "{} price shifts for {} rows",
                shifts.len(),
                frame.n_rows()
            )));
        }
        let compiled = self.compile(frame)?;
        let b = compiled.len() as f64;
        Ok((0..frame.n_rows())
            .into_par_iter()
            .map(|row| {
                compiled
                    .iter()
                    .map(|t| t.predict_row(frame, row, shifts[row]))
                    .sum::<f64>()
                    / b
            })
            .collect())
    }

    /// Number of trees whose training sample excludes each record.
    pub fn oob_counts(&self) -> Vec<usize> {
        (0..self.n_records)
            .map(|i| self.memberships.iter().filter(|m| !m.contains(i)).count())
            .collect()
    }

    pub fn oob_predict(&self, frame: &TrainingFrame, record: usize) -> Result<Option<f64>> {
        self.check_frame(frame)?;
        let mut s = 0.0;
        let mut k = 0usize;
        for (t, m) in self.trees.iter().zip(&self.memberships) {
            if !m.contains(record) {
                s += t.predict(&frame.row(record))?;
                k += 1;
            }
        }
        Ok((k > 0).then(|| s / k as f64))
    }

    /// Out-of-bag prediction of every record; `None` where every tree
    /// trained on the record.
    pub fn oob_predictions(&self, frame: &TrainingFrame) -> Result<Vec<Option<f64>>> {
        self.check_frame(frame)?;
        let compiled = self.compile(frame)?;
        Ok((0..self.n_records)
            .into_par_iter()
            .map(|row| {
                let mut s = 0.0;
                let mut k = 0usize;
                for (t, m) in compiled.iter().zip(&self.memberships) {
                    if !m.contains(row) {
                        s += t.predict_row(frame, row, 0.0);
                        k += 1;
                    }
                }
                (k > 0).then(|| s / k as f64)
            })
            .collect())
    }

    /// Out-of-bag R² over the records that have an out-of-bag prediction.
    pub fn cv_r2(&self, frame: &TrainingFrame) -> Result<f64> {
        cv_r2_from(frame.response(), &self.oob_predictions(frame)?)
    }

    pub fn variable_importance(&self) -> ImportanceTable {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for t in &self.trees {
            for e in t.split_log() {
                match counts.iter_mut().find(|(v, _)| *v == e.variable) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((e.variable.clone(), 1)),
                }
            }
        }
        ImportanceTable::from_counts(counts, &self.config.tree.split_candidates)
    }

    fn check_frame(&self, frame: &TrainingFrame) -> Result<()> {
        if frame.n_rows() != self.n_records {
            return Err(Error::Dimension(format!(
                "forest was trained on {} records, frame has {}",
                self.n_records,
                frame.n_rows()
            )));
        }
        Ok(())
    }

    /// Writes `manifest.json` and one JSON file per tree into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tree_files = Vec::with_capacity(self.trees.len());
        for (b, t) in self.trees.iter().enumerate() {
            let name = format!("tree_{:04}.json", b + 1);
            let path = dir.join(&name);
            fs::write(&path, t.to_json()?).map_err(|e| Error::io(&path, e))?;
            tree_files.push(name);
        }
        let manifest = ForestManifest {
            schema: FOREST_SCHEMA.to_string(),
            config: self.config.clone(),
            n_records: self.n_records,
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            memberships: self.memberships.iter().map(Membership::to_hex).collect(),
            tree_files,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<BaggedForest> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ForestManifest = serde_json::from_str(&text)?;
        if manifest.schema != FOREST_SCHEMA {
            return Err(Error::Serde(format!("unsupported forest schema `{}`", manifest.schema)));
        }
        let mut trees = Vec::with_capacity(manifest.tree_files.len());
        for name in &manifest.tree_files {
            let p = dir.join(name);
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            trees.push(ModelTree::from_json(&text)?);
        }
        let memberships = manifest
            .memberships
            .iter()
            .map(|h| Membership::from_hex(h, manifest.n_records))
            .collect::<Result<Vec<_>>>()?;
        let mut forest = BaggedForest::from_parts(manifest.config, trees, memberships)?;
        forest.dataset_fingerprint = manifest.dataset_fingerprint;
        Ok(forest)
    }
}

#[derive(Serialize, Deserialize)]
struct ForestManifest {
    schema: String,
    config: ForestConfig,
    n_records: usize,
    dataset_fingerprint: Option<String>,
    memberships: Vec<String>,
    tree_files: Vec<String>,
}

/// `1 - Σ(q - q̂)² / Σ(q - q̄)²` over records with a prediction.
pub fn cv_r2_from(response: &[f64], predictions: &[Option<f64>]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = response
        .iter()
        .zip(predictions)
        .filter_map(|(q, p)| p.map(|p| (*q, p)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOutOfBag);
    }
    let mean = pairs.iter().map(|(q, _)| q).sum::<f64>() / pairs.len() as f64;
    let sse: f64 = pairs.iter().map(|(q, p)| (q - p).powi(2)).sum();
    let tss: f64 = pairs.iter().map(|(q, _)| (q - mean).powi(2)).sum();
    Ok(1.0 - sse / tss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceEntry {
    pub variable: String,
    pub splits: usize,
    pub share: f64,
}

/// Shares of all splits made on each variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceTable {
    /// Sorted by decreasing share, then by candidate order.
    pub entries: Vec<ImportanceEntry>,
    pub total_partitions: usize,
}

impl ImportanceTable {
    pub fn from_counts(counts: Vec<(String, usize)>, candidate_order: &[String]) -> Self {
        let total: usize = counts.iter().map(|(_, c)| c).sum();
        let rank = |v: &str| candidate_order.iter().position(|c| c == v).unwrap_or(usize::MAX);
        let mut entries: Vec<ImportanceEntry> = counts
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(variable, splits)| ImportanceEntry {
                share: splits as f64 / total as f64,
                variable,
                splits,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.splits
                .cmp(&a.splits)
                .then(rank(&a.variable).cmp(&rank(&b.variable)))
                .then(a.variable.cmp(&b.variable))
        });
        ImportanceTable {
            entries,
            total_partitions: total,
        }
    }

    pub fn share(&self, variable: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.variable == variable)
            .map_or(0.0, |e| e.share)
    }

    pub fn top(&self) -> Option<&ImportanceEntry> {
        self.entries.first()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,splits,share\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.variable, e.splits, e.share);
        }
        out
    }
}

/// Per-record out-of-bag predictions as CSV.
pub fn oob_csv(dataset: &Dataset, forest: &BaggedForest, predictions: &[Option<f64>]) -> String {
    let counts = forest.oob_counts();
    let mut out = String::from("record,log_tickets,oob_prediction,oob_trees\n");
    for (i, r) in dataset.records().iter().enumerate() {
        let p = predictions[i].map_or(String::new(), |p| p.to_string());
        let _ = writeln!(out, "{},{},{},{}", dataset.key(i), r.log_tickets, p, counts[i]);
    }
    out
}
