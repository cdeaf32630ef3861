//! The subcommands, each reading its inputs by role and writing named
//! outputs plus a run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use railfare::data::{
    ingest, parse_tariffs, settlement_pair_matrix, share_growth_table, Dataset, FareCategory, Grouping, InputPaths,
    SizeClass, Specification,
};
use railfare::elasticity::{elasticity_distribution, group_elasticity};
use railfare::forest::{fit_forest, oob_csv, BaggedForest};
use railfare::linreg::{fit_by_fare_category, fit_specification};
use railfare::pricing::{
    recommend_groups, recommendations_csv, recommendations_summary, revenue_delta, TariffSchedule,
};
use railfare::synth::{generate, Preset, SynthConfig};
use railfare::tree::TrainingFrame;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{digest, InputRecord, RunManifest, MANIFEST_FILE, TOOL, VERSION};

pub const TABLE_ROLES: [&str; 5] = ["tickets", "stations", "tariffs", "cpi", "zones"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Describe,
    Ols,
    Fit,
    Elasticity,
    Price,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Describe => "describe",
            Command::Ols => "ols",
            Command::Fit => "fit",
            Command::Elasticity => "elasticity",
            Command::Price => "price",
            Command::Synth => "synth",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Ok(match s {
            "ingest" => Command::Ingest,
            "describe" => Command::Describe,
            "ols" => Command::Ols,
            "fit" => Command::Fit,
            "elasticity" => Command::Elasticity,
            "price" => Command::Price,
            "synth" => Command::Synth,
            other => return Err(CliError::Manifest(format!("unknown command `{other}`"))),
        })
    }
}

/// A fully resolved command: what to run, on which files, with which
/// settings.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub inputs: BTreeMap<String, PathBuf>,
    pub config: RunConfig,
}

impl Invocation {
    pub fn from_manifest(m: &RunManifest) -> CliResult<Self> {
        Ok(Invocation {
            command: m.command.parse()?,
            inputs: m.inputs.iter().map(|(k, v)| (k.clone(), v.path.clone())).collect(),
            config: m.config.clone(),
        })
    }

    fn input(&self, role: &str) -> CliResult<&Path> {
        self.inputs
            .get(role)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::Usage(format!("`{}` needs a {role} input", self.command.name())))
    }
}

struct Outputs {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes.as_ref()).map_err(|e| CliError::io(&path, e))?;
        self.digests.insert(name.to_string(), digest(&path)?);
        Ok(())
    }

    fn record(&mut self, name: &str) -> CliResult<()> {
        self.digests.insert(name.to_string(), digest(&self.dir.join(name))?);
        Ok(())
    }
}

/// Runs the invocation into `out` and writes its manifest. Returns the
/// text summary meant for standard output.
pub fn run(inv: &Invocation, out: &Path) -> CliResult<String> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut inputs = BTreeMap::new();
    for (role, path) in &inv.inputs {
        let abs = fs::canonicalize(path).map_err(|e| CliError::io(path, e))?;
        let sha256 = digest(&abs)?;
        inputs.insert(role.clone(), InputRecord { path: abs, sha256 });
    }
    let mut outputs = Outputs {
        dir: out.to_path_buf(),
        digests: BTreeMap::new(),
    };
    let summary = match inv.command {
        Command::Ingest => cmd_ingest(inv, &mut outputs)?,
        Command::Describe => cmd_describe(inv, &mut outputs)?,
        Command::Ols => cmd_ols(inv, &mut outputs)?,
        Command::Fit => cmd_fit(inv, &mut outputs)?,
        Command::Elasticity => cmd_elasticity(inv, &mut outputs)?,
        Command::Price => cmd_price(inv, &mut outputs)?,
        Command::Synth => cmd_synth(inv, &mut outputs)?,
    };
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        command: inv.command.name().to_string(),
        seed: inv.config.seed,
        inputs,
        config: inv.config.clone(),
        outputs: outputs.digests,
    };
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

fn read_archive(path: &Path) -> CliResult<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Dataset::from_archive_json(&text)?)
}

fn load_forest(path: &Path, dataset: &Dataset) -> CliResult<BaggedForest> {
    let forest = BaggedForest::load(path)?;
    let fp = dataset.fingerprint()?;
    match forest.dataset_fingerprint() {
        Some(f) if f != fp => Err(CliError::Usage(format!(
            "forest {} was trained on another dataset ({f}, archive is {fp})",
            path.display()
        ))),
        _ => Ok(forest),
    }
}

fn cmd_ingest(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let paths = InputPaths {
        tickets: inv.input("tickets")?.to_path_buf(),
        stations: inv.input("stations")?.to_path_buf(),
        tariffs: inv.input("tariffs")?.to_path_buf(),
        cpi: inv.input("cpi")?.to_path_buf(),
        zones: inv.input("zones")?.to_path_buf(),
    };
    let dataset = ingest(&paths, None)?;
    if dataset.is_empty() {
        eprintln!(
            "warning: {} holds no tickets; the archive is empty",
            paths.tickets.display()
        );
    }
    out.write("dataset.json", dataset.to_archive_json()?)?;
    let summary = format!(
        "records: {}\nroutes: {}\nstations: {}\ntickets: {}\nbase period: {}\n",
        dataset.len(),
        dataset.routes().len(),
        dataset.stations().len(),
        dataset.total_tickets(),
        dataset.base_period()
    );
    out.write("summary.txt", &summary)?;
    Ok(summary)
}

fn cmd_describe(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let dataset = read_archive(inv.input("archive")?)?;
    let grouping: Grouping = inv.config.describe.grouping.parse().map_err(CliError::Usage)?;
    let rows = share_growth_table(&dataset, grouping);
    let mut csv = String::from("group,year,count,growth_pct,share_pct\n");
    for r in &rows {
        let growth = r.growth_pct.map_or(String::new(), |g| format!("{g:.1}"));
        let _ = writeln!(csv, "{},{},{},{},{:.1}", r.group, r.year, r.count, growth, r.share_pct);
    }
    let name = format!("share_growth_{grouping}.csv");
    out.write(&name, &csv)?;
    if grouping == Grouping::SettlementPair {
        let m = settlement_pair_matrix(&dataset);
        let mut t = String::from("departure");
        for c in SizeClass::ALL {
            let _ = write!(t, ",{}", c.slug());
        }
        t.push_str(",total\n");
        for (i, c) in SizeClass::ALL.iter().enumerate() {
            t.push_str(c.slug());
            for v in m.shares_pct[i] {
                let _ = write!(t, ",{v:.1}");
            }
            let _ = writeln!(t, ",{:.1}", m.row_totals_pct[i]);
        }
        t.push_str("total");
        for v in m.column_totals_pct {
            let _ = write!(t, ",{v:.1}");
        }
        t.push_str(",100.0\n");
        out.write("settlement_matrix.csv", &t)?;
    }
    Ok(csv)
}

#[derive(Serialize)]
struct OlsReport {
    specification: Specification,
    fare_category: String,
    fit: Option<railfare::linreg::OlsFit>,
    skipped: Option<String>,
}

fn cmd_ols(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let dataset = read_archive(inv.input("archive")?)?;
    let specs: Vec<Specification> = match inv.config.ols.spec.trim() {
        "all" => Specification::ALL.to_vec(),
        s => vec![s.parse().map_err(CliError::Usage)?],
    };
    let mut reports = Vec::new();
    for spec in specs {
        match inv.config.ols.fare_category.trim() {
            "pooled" => reports.push(OlsReport {
                specification: spec,
                fare_category: "pooled".into(),
                fit: Some(fit_specification(&dataset, spec)?),
                skipped: None,
            }),
            "all" => {
                let fits = fit_by_fare_category(&dataset, spec)?;
                for (c, f) in fits.fits {
                    reports.push(OlsReport {
                        specification: spec,
                        fare_category: c.to_string(),
                        fit: Some(f),
                        skipped: None,
                    });
                }
                for (c, why) in fits.skipped {
                    eprintln!("notice: {c} skipped under specification {spec}: {why}");
                    reports.push(OlsReport {
                        specification: spec,
                        fare_category: c.to_string(),
                        fit: None,
                        skipped: Some(why),
                    });
                }
            }
            c => {
                let category: FareCategory = c.parse().map_err(CliError::Usage)?;
                let subset = dataset.with_category(category);
                reports.push(OlsReport {
                    specification: spec,
                    fare_category: category.to_string(),
                    fit: Some(fit_specification(&subset, spec)?),
                    skipped: None,
                });
            }
        }
    }
    out.write("ols.json", serde_json::to_string_pretty(&reports)? + "\n")?;
    let mut summary = String::from("spec  category              elasticity   stderr     r2      n_obs  n_params\n");
    for r in &reports {
        match &r.fit {
            Some(f) => {
                let _ = writeln!(
                    summary,
                    "{:<5} {:<20} {:>10.4} {:>9.4} {:>7.4} {:>9} {:>8}",
                    r.specification.to_string(),
                    r.fare_category,
                    f.price_elasticity().unwrap_or(f64::NAN),
                    f.standard_error("log_real_fare").unwrap_or(f64::NAN),
                    f.r2,
                    f.n_obs,
                    f.n_params
                );
            }
            None => {
                let _ = writeln!(
                    summary,
                    "{:<5} {:<20} skipped",
                    r.specification.to_string(),
                    r.fare_category
                );
            }
        }
    }
    Ok(summary)
}

fn cmd_fit(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let dataset = read_archive(inv.input("archive")?)?;
    let config = inv.config.forest_config();
    let forest = fit_forest(&dataset, &config)?;
    forest.save(&out.dir.join("forest"))?;
    out.record("forest")?;
    let frame = TrainingFrame::from_dataset(&dataset);
    let oob = forest.oob_predictions(&frame)?;
    let cv_r2 = railfare::forest::cv_r2_from(frame.response(), &oob)?;
    let pooled = fit_specification(&dataset, Specification::IV).ok().map(|f| f.r2);
    let importance = forest.variable_importance();
    let report = json!({
        "n_records": dataset.len(),
        "n_trees": config.n_trees,
        "subsample_fraction": config.subsample_fraction,
        "seed": config.seed,
        "cv_r2": cv_r2,
        "pooled_ols_r2": pooled,
        "total_partitions": importance.total_partitions,
        "importance": importance.entries,
    });
    out.write("report.json", serde_json::to_string_pretty(&report)? + "\n")?;
    out.write("importance.csv", importance.to_csv())?;
    out.write("oob.csv", oob_csv(&dataset, &forest, &oob))?;
    let mut summary = format!("cv_r2: {cv_r2:.4}\n");
    if let Some(r2) = pooled {
        let _ = writeln!(summary, "pooled OLS r2 (IV): {r2:.4}");
    }
    for e in importance.entries.iter().take(10) {
        let _ = writeln!(summary, "{:<32} {:>7} {:>6.1}%", e.variable, e.splits, 100.0 * e.share);
    }
    Ok(summary)
}

fn cmd_elasticity(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let dataset = read_archive(inv.input("archive")?)?;
    let forest = load_forest(inv.input("forest")?, &dataset)?;
    let e = &inv.config.elasticity;
    let report = elasticity_distribution(&forest, &dataset, e.perturbation, e.bins, e.inelastic_tolerance)?;
    let table = group_elasticity(&report.values, &dataset, &e.bands)?;
    out.write("elasticities.csv", report.per_record_csv(&dataset))?;
    out.write("distribution.json", report.summary_json()? + "\n")?;
    out.write("histogram.svg", report.histogram_svg())?;
    out.write("groups.csv", table.to_csv())?;
    out.write("group_counts.csv", table.counts_csv())?;
    let s = report.shares;
    Ok(format!(
        "mean elasticity: {:.4}\nelastic: {:.1}%\nweakly elastic: {:.1}%\ninelastic: {:.1}%\npositive: {:.1}%\n\n{}",
        report.mean,
        100.0 * s.elastic,
        100.0 * s.weakly_elastic,
        100.0 * s.inelastic,
        100.0 * s.positive,
        table.to_csv()
    ))
}

fn cmd_price(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let dataset = read_archive(inv.input("archive")?)?;
    let forest = load_forest(inv.input("forest")?, &dataset)?;
    let e = &inv.config.elasticity;
    let report = elasticity_distribution(&forest, &dataset, e.perturbation, e.bins, e.inelastic_tolerance)?;
    let table = group_elasticity(&report.values, &dataset, &e.bands)?;
    let baseline = TariffSchedule::latest(dataset.tariffs())?;
    let recs = recommend_groups(&table, &dataset, &baseline, &inv.config.pricing_options())?;
    out.write("recommendations.csv", recommendations_csv(&recs))?;
    let mut summary = recommendations_summary(&recs);
    if let Some(path) = inv.inputs.get("schedule") {
        let file = fs::File::open(path).map_err(|err| CliError::io(path, err))?;
        let table = parse_tariffs(file, &path.display().to_string())?;
        let proposed = match inv.config.pricing.year {
            Some(y) => TariffSchedule::from_table(&table, y)?,
            None => TariffSchedule::latest(&table)?,
        };
        let delta = revenue_delta(&forest, &dataset, &proposed, &baseline)?;
        let groups: Vec<_> = delta
            .groups
            .iter()
            .map(|g| {
                json!({
                    "direction": g.direction,
                    "trip_type": g.trip_type,
                    "records": g.records,
                    "baseline_revenue": g.baseline_revenue,
                    "proposed_revenue": g.proposed_revenue,
                    "delta_pct": g.delta_pct(),
                })
            })
            .collect();
        let doc = json!({
            "baseline_year": baseline.year,
            "proposed_year": proposed.year,
            "baseline_revenue": delta.baseline_revenue,
            "proposed_revenue": delta.proposed_revenue,
            "delta_pct": delta.delta_pct(),
            "groups": groups,
        });
        out.write("revenue.json", serde_json::to_string_pretty(&doc)? + "\n")?;
        let _ = writeln!(
            summary,
            "\nrevenue change under the proposed schedule: {:+.2}%",
            delta.delta_pct()
        );
    }
    out.write("recommendations.txt", &summary)?;
    Ok(summary)
}

fn cmd_synth(inv: &Invocation, out: &mut Outputs) -> CliResult<String> {
    let s = &inv.config.synth;
    let config = match &s.custom {
        Some(c) => c.clone(),
        None => SynthConfig::preset(s.preset.parse::<Preset>().map_err(CliError::Usage)?),
    }
    .with_seed(inv.config.seed);
    let synth = generate(&config)?;
    synth.write(&out.dir)?;
    for name in TABLE_ROLES
        .iter()
        .map(|r| format!("{r}.csv"))
        .chain(["ground_truth.csv".to_string()])
    {
        out.record(&name)?;
    }
    out.write("synth_config.json", serde_json::to_string_pretty(&config)? + "\n")?;
    Ok(format!(
        "records: {}\nroutes: {}\nstations: {}\nsegments: {}\n",
        synth.dataset.len(),
        synth.dataset.routes().len(),
        synth.dataset.stations().len(),
        config.segments.len()
    ))
}
