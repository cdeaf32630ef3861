mod commands;
mod config;
mod error;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use railfare::data::InputPaths;

use crate::commands::{Command, Invocation, TABLE_ROLES};
use crate::config::{parse_bands, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};

/// Demand elasticity estimation and fare recommendations for suburban rail.
#[derive(Parser)]
#[command(name = "railfare", version)]
struct Cli {
    /// Worker threads for forest training and prediction; results do not
    /// depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Out {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Archive {
    /// Dataset archive written by `ingest`.
    #[arg(long)]
    archive: PathBuf,
}

#[derive(Args)]
struct ElasticityArgs {
    /// Forest directory written by `fit`.
    #[arg(long)]
    forest: PathBuf,
    /// Relative fare change used for the elasticity ratio.
    #[arg(long)]
    perturbation: Option<f64>,
    /// Zone bands, e.g. `from_to_perm=1-4,5-8,9-17;within_perm=1,2`.
    #[arg(long)]
    bands: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset with known elasticities.
    Synth {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Read the five input tables into a dataset archive.
    Ingest {
        /// Directory holding tickets.csv, stations.csv, tariffs.csv, cpi.csv and zones.csv.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Ticket counts, growth and shares by group.
    Describe {
        #[command(flatten)]
        archive: Archive,
        /// `direction`, `zone` or `settlement_pair`.
        #[arg(long)]
        grouping: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Pooled log-log regressions.
    Ols {
        #[command(flatten)]
        archive: Archive,
        /// `I`, `II`, `III`, `IV` or `all`.
        #[arg(long)]
        spec: Option<String>,
        /// A fare category, `all` for one fit per category, or `pooled`.
        #[arg(long)]
        fare_category: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Train the bagged model-tree ensemble.
    Fit {
        #[command(flatten)]
        archive: Archive,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        subsample: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Per-record elasticities, their distribution and the group table.
    Elasticity {
        #[command(flatten)]
        archive: Archive,
        #[command(flatten)]
        elasticity: ElasticityArgs,
        #[command(flatten)]
        out: Out,
    },
    /// Fare recommendations, and the revenue effect of a proposed schedule.
    Price {
        #[command(flatten)]
        archive: Archive,
        #[command(flatten)]
        elasticity: ElasticityArgs,
        /// Tariff table holding the proposed schedule.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Year of the proposed schedule to use.
        #[arg(long)]
        year: Option<i32>,
        #[command(flatten)]
        out: Out,
    },
    /// Rerun a recorded command and compare its outputs.
    Replay {
        manifest: PathBuf,
        /// Output directory; defaults to `replay` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?;
    }
    if let Cmd::Replay { manifest, out } = &cli.command {
        return replay(manifest, out.as_deref());
    }
    let mut config = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut inputs = BTreeMap::new();
    let (command, out) = match cli.command {
        Cmd::Synth { preset, seed, out } => {
            set(&mut config.synth.preset, preset);
            set(&mut config.seed, seed);
            (Command::Synth, out)
        }
        Cmd::Ingest { input, out } => {
            let paths = InputPaths::in_dir(&input);
            for (role, path) in TABLE_ROLES.iter().zip(paths.all()) {
                inputs.insert(role.to_string(), path.clone());
            }
            (Command::Ingest, out)
        }
        Cmd::Describe { archive, grouping, out } => {
            inputs.insert("archive".into(), archive.archive);
            set(&mut config.describe.grouping, grouping);
            (Command::Describe, out)
        }
        Cmd::Ols {
            archive,
            spec,
            fare_category,
            out,
        } => {
            inputs.insert("archive".into(), archive.archive);
            set(&mut config.ols.spec, spec);
            set(&mut config.ols.fare_category, fare_category);
            (Command::Ols, out)
        }
        Cmd::Fit {
            archive,
            trees,
            subsample,
            seed,
            out,
        } => {
            inputs.insert("archive".into(), archive.archive);
            set(&mut config.forest.n_trees, trees);
            set(&mut config.forest.subsample_fraction, subsample);
            set(&mut config.seed, seed);
            (Command::Fit, out)
        }
        Cmd::Elasticity {
            archive,
            elasticity,
            out,
        } => {
            inputs.insert("archive".into(), archive.archive);
            apply_elasticity(&mut config, &mut inputs, elasticity)?;
            (Command::Elasticity, out)
        }
        Cmd::Price {
            archive,
            elasticity,
            schedule,
            year,
            out,
        } => {
            inputs.insert("archive".into(), archive.archive);
            apply_elasticity(&mut config, &mut inputs, elasticity)?;
            if let Some(s) = schedule {
                inputs.insert("schedule".into(), s);
            }
            if year.is_some() {
                config.pricing.year = year;
            }
            (Command::Price, out)
        }
        Cmd::Replay { .. } => unreachable!(),
    };
    let inv = Invocation {
        command,
        inputs,
        config,
    };
    let summary = commands::run(&inv, &out.out)?;
    print!("{summary}");
    Ok(())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_elasticity(
    config: &mut RunConfig,
    inputs: &mut BTreeMap<String, PathBuf>,
    args: ElasticityArgs,
) -> CliResult<()> {
    inputs.insert("forest".into(), args.forest);
    set(&mut config.elasticity.perturbation, args.perturbation);
    if let Some(b) = args.bands {
        config.elasticity.bands = parse_bands(&b)?;
    }
    Ok(())
}

fn replay(path: &Path, out: Option<&Path>) -> CliResult<()> {
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let recorded = RunManifest::read(&path)?;
    recorded.verify_inputs()?;
    let out = out.map_or_else(
        || path.parent().unwrap_or(Path::new(".")).join("replay"),
        Path::to_path_buf,
    );
    let inv = Invocation::from_manifest(&recorded)?;
    commands::run(&inv, &out)?;
    let fresh = RunManifest::read(&out.join(MANIFEST_FILE))?;
    let mut differing = Vec::new();
    for (name, d) in &recorded.outputs {
        if fresh.outputs.get(name) != Some(d) {
            differing.push(name.as_str());
        }
    }
    for name in fresh.outputs.keys() {
        if !recorded.outputs.contains_key(name) {
            differing.push(name.as_str());
        }
    }
    if differing.is_empty() {
        println!(
            "replayed {}: {} outputs identical",
            recorded.command,
            recorded.outputs.len()
        );
        Ok(())
    } else {
        Err(CliError::Manifest(format!(
            "outputs differ from the recorded run: {}",
            differing.join(", ")
        )))
    }
}
