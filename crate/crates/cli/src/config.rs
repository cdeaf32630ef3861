//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.

use std::path::Path;

use railfare::elasticity::{DistanceBands, ZoneBand, DEFAULT_BINS, DEFAULT_INELASTIC_TOLERANCE, DEFAULT_PERTURBATION};
use railfare::forest::ForestConfig;
use railfare::pricing::PricingOptions;
use railfare::synth::SynthConfig;
use railfare::tree::TreeConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub describe: DescribeConfig,
    pub ols: OlsConfig,
    pub forest: ForestSection,
    pub elasticity: ElasticityConfig,
    pub pricing: PricingConfig,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeConfig {
    /// `direction`, `zone` or `settlement_pair`.
    pub grouping: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OlsConfig {
    /// `I` to `IV`, or `all`.
    pub spec: String,
    /// A fare category, `all` for one fit per category, or `pooled`.
    pub fare_category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    pub with_replacement: bool,
    pub tree: TreeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticityConfig {
    pub perturbation: f64,
    pub inelastic_tolerance: f64,
    pub bins: usize,
    pub bands: DistanceBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    pub hold_band: f64,
    pub max_decrease: f64,
    pub max_increase: f64,
    pub marginal_cost: f64,
    /// Year of the proposed schedule; the latest year when absent.
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub preset: String,
    /// A full generator configuration replacing the preset.
    pub custom: Option<SynthConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let forest = ForestConfig::default();
        let pricing = PricingOptions::default();
        RunConfig {
            seed: 0,
            describe: DescribeConfig {
                grouping: "direction".into(),
            },
            ols: OlsConfig {
                spec: "all".into(),
                fare_category: "pooled".into(),
            },
            forest: ForestSection {
                n_trees: forest.n_trees,
                subsample_fraction: forest.subsample_fraction,
                with_replacement: forest.with_replacement,
                tree: forest.tree,
            },
            elasticity: ElasticityConfig {
                perturbation: DEFAULT_PERTURBATION,
                inelastic_tolerance: DEFAULT_INELASTIC_TOLERANCE,
                bins: DEFAULT_BINS,
                bands: DistanceBands::default(),
            },
            pricing: PricingConfig {
                hold_band: pricing.hold_band,
                max_decrease: pricing.max_decrease,
                max_increase: pricing.max_increase,
                marginal_cost: pricing.marginal_cost,
                year: None,
            },
            synth: SynthSection {
                preset: "calibrated".into(),
                custom: None,
            },
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the tables of a TOML file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let overlay: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut base = toml::Table::try_from(RunConfig::default())
            .map_err(|e| CliError::Config(format!("default configuration: {e}")))?;
        merge(&mut base, overlay);
        toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.forest.n_trees,
            subsample_fraction: self.forest.subsample_fraction,
            with_replacement: self.forest.with_replacement,
            seed: self.seed,
            tree: self.forest.tree.clone(),
        }
    }

    pub fn pricing_options(&self) -> PricingOptions {
        PricingOptions {
            hold_band: self.pricing.hold_band,
            max_decrease: self.pricing.max_decrease,
            max_increase: self.pricing.max_increase,
            marginal_cost: self.pricing.marginal_cost,
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses bands written as
/// `from_to_perm=1-4,5-8,9-17;out_of_perm=1-3,4-6,7-17;within_perm=1,2`.
/// Bands are named Short, Middle and Long in order; trip types left out
/// keep their defaults.
pub fn parse_bands(text: &str) -> CliResult<DistanceBands> {
    const NAMES: [&str; 3] = ["Short", "Middle", "Long"];
    let mut bands = DistanceBands::default();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, list) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("band group `{part}` lacks `=`")))?;
        let mut parsed = Vec::new();
        for (i, item) in list.split(',').map(str::trim).enumerate() {
            let (a, b) = item.split_once('-').unwrap_or((item, item));
            let zone = |s: &str| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| CliError::Usage(format!("bad zone `{s}` in band `{item}`")))
            };
            let name = NAMES
                .get(i)
                .map_or_else(|| format!("Band {}", i + 1), |n| n.to_string());
            parsed.push(ZoneBand::new(&name, zone(a)?, zone(b)?));
        }
        match key.trim() {
            "from_to_perm" => bands.from_to_perm = parsed,
            "out_of_perm" => bands.out_of_perm = parsed,
            "within_perm" => bands.within_perm = parsed,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown trip type `{other}`; expected from_to_perm, out_of_perm or within_perm"
                )))
            }
        }
    }
    bands.validate()?;
    Ok(bands)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_overlays_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "seed = 9\n[forest]\nn_trees = 12\n[forest.tree]\nimprovement_tolerance = 0.01\n",
        )
        .unwrap();
        let c = RunConfig::from_file(&p).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.forest.n_trees, 12);
        assert_eq!(c.forest.subsample_fraction, 0.75);
        assert_eq!(c.forest.tree.improvement_tolerance, 0.01);
        assert_eq!(c.elasticity.perturbation, 0.10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[forest]\ntrees = 12\n").unwrap();
        assert!(RunConfig::from_file(&p).is_err());
    }

    #[test]
    fn band_syntax() {
        let b = parse_bands("within_perm=1,2-3").unwrap();
        assert_eq!(b.within_perm[1].first_zone, 2);
        assert_eq!(b.within_perm[1].last_zone, 3);
        assert_eq!(b.from_to_perm, DistanceBands::default().from_to_perm);
        assert!(parse_bands("out_of_perm=1-3,3-6,7-17").is_err());
    }
}
