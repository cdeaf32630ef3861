use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn railfare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_railfare"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = railfare(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap()
}

/// Synthesises the two-segment preset and ingests it.
fn archive(dir: &Path) -> String {
    ok(&["synth", "--preset", "two-segment", "--out", &path(dir, "synth")]);
    let stdout = ok(&["ingest", "--input", &path(dir, "synth"), "--out", &path(dir, "ingest")]);
    assert!(stdout.starts_with("records: 7920\n"), "{stdout}");
    path(dir, "ingest/dataset.json")
}

#[test]
fn errors_carry_a_code_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = railfare(&[
        "describe",
        "--archive",
        &path(dir.path(), "missing.json"),
        "--out",
        &path(dir.path(), "d"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E101]: "));

    let out = railfare(&["synth", "--preset", "nope", "--out", &path(dir.path(), "s")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E900]: unknown preset"));
}

#[test]
fn manifest_records_inputs_outputs_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let archive = archive(dir.path());
    let out = path(dir.path(), "ols");
    ok(&["ols", "--archive", &archive, "--spec", "IV", "--out", &out]);
    let m = manifest(Path::new(&out));
    assert_eq!(m["tool"], "railfare");
    assert_eq!(m["command"], "ols");
    assert_eq!(m["config"]["ols"]["spec"], "IV");
    let input = &m["inputs"]["archive"];
    assert!(Path::new(input["path"].as_str().unwrap()).is_absolute());
    assert_eq!(input["sha256"].as_str().unwrap().len(), 64);
    assert!(m["outputs"]["ols.json"].is_string());
    let fits: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ols/ols.json")).unwrap()).unwrap();
    assert_eq!(fits.as_array().unwrap().len(), 1);
    assert_eq!(fits[0]["specification"], "IV");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let archive = archive(dir.path());
    let config = path(dir.path(), "run.toml");
    fs::write(&config, "seed = 5\n[forest]\nn_trees = 3\nsubsample_fraction = 0.5\n").unwrap();
    let out = path(dir.path(), "fit");
    ok(&[
        "fit",
        "--config",
        &config,
        "--archive",
        &archive,
        "--trees",
        "4",
        "--out",
        &out,
    ]);
    let m = manifest(Path::new(&out));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["forest"]["n_trees"], 4);
    assert_eq!(m["config"]["forest"]["subsample_fraction"], 0.5);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_trees"], 4);
    assert_eq!(fs::read_dir(dir.path().join("fit/forest")).unwrap().count(), 5);
}

#[test]
fn replay_rejects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let archive = archive(dir.path());
    let out = path(dir.path(), "describe");
    ok(&["describe", "--archive", &archive, "--grouping", "zone", "--out", &out]);
    assert!(dir.path().join("describe/share_growth_zone.csv").exists());
    ok(&["replay", &out]);
    fs::write(&archive, "{}").unwrap();
    let r = railfare(&["replay", &out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error[E902]: "));
}

#[test]
fn forest_must_match_the_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = archive(dir.path());
    let fit = path(dir.path(), "fit");
    ok(&["fit", "--archive", &archive, "--trees", "2", "--out", &fit]);
    ok(&[
        "synth",
        "--preset",
        "two_segment",
        "--seed",
        "8",
        "--out",
        &path(dir.path(), "other"),
    ]);
    ok(&[
        "ingest",
        "--input",
        &path(dir.path(), "other"),
        "--out",
        &path(dir.path(), "other_ingest"),
    ]);
    let r = railfare(&[
        "elasticity",
        "--archive",
        &path(dir.path(), "other_ingest/dataset.json"),
        "--forest",
        &path(dir.path(), "fit/forest"),
        "--out",
        &path(dir.path(), "e"),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("another dataset"));
}

#[test]
fn custom_bands_reach_the_group_table() {
    let dir = tempfile::tempdir().unwrap();
    let archive = archive(dir.path());
    let fit = path(dir.path(), "fit");
    ok(&["fit", "--archive", &archive, "--trees", "2", "--out", &fit]);
    let out = path(dir.path(), "e");
    ok(&[
        "elasticity",
        "--archive",
        &archive,
        "--forest",
        &path(dir.path(), "fit/forest"),
        "--bands",
        "from_to_perm=1-6,7-17",
        "--perturbation",
        "0.05",
        "--out",
        &out,
    ]);
    let groups = fs::read_to_string(dir.path().join("e/groups.csv")).unwrap();
    assert!(groups.contains("Short (1-6 zones)"), "{groups}");
    assert!(groups.contains("Middle (7-17 zones)"), "{groups}");
    assert_eq!(manifest(Path::new(&out))["config"]["elasticity"]["perturbation"], 0.05);
}
