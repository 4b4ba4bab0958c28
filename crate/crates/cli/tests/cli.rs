//! End-to-end runs of the `oprg` binary on the shipped configs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn oprg(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_oprg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn validate_tls1_passes_every_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tls1.toml");
    assert_eq!(oprg(&["validate", "--config", cfg.to_str().unwrap()], dir.path()), 0);
    let table = read(dir.path().join("invariants.csv"));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(rows.len() >= 8);
    assert!(rows.iter().all(|r| r.ends_with(",true")), "{table}");
    for name in ["config.toml", "command.json", "run.log"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn overdriven_rg_reports_neumann_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tls1.toml");
    assert_eq!(oprg(&["rg", "--config", cfg.to_str().unwrap(), "--g", "8"], dir.path()), 2);
    let record: serde_json::Value = serde_json::from_str(&read(dir.path().join("error.json"))).unwrap();
    assert_eq!(record["root_class"], "NeumannConditionFailed");
    assert_eq!(record["exit_code"], 2);
}

#[test]
fn match_tls1_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tls1.toml");
    assert_eq!(oprg(&["match", "--config", cfg.to_str().unwrap()], dir.path()), 0);
    let table = read(dir.path().join("match.csv"));
    let mut reader = csv::Reader::from_reader(table.as_bytes());
    let mut orders = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let discrepancy: f64 = row[5].parse().unwrap();
        assert!(discrepancy <= 1e-6);
        orders += 1;
    }
    assert_eq!(orders, 5);
}

#[test]
fn rg_energy_matches_exact_diagonalization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("three_level.toml");
    assert_eq!(oprg(&["rg", "--config", cfg.to_str().unwrap(), "--g", "0.005,0.01"], dir.path()), 0);
    let table = read(dir.path().join("energies.csv"));
    let mut reader = csv::Reader::from_reader(table.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (e, ed) = (col("energy"), col("energy_ed"));
    for row in reader.records() {
        let row = row.unwrap();
        let diff = (row[e].parse::<f64>().unwrap() - row[ed].parse::<f64>().unwrap()).abs();
        assert!(diff <= 1e-6, "{diff}");
    }
    assert!(dir.path().join("trace.json").exists());
    assert!(dir.path().join("steps.csv").exists());
}

#[test]
fn csv_outputs_are_deterministic() {
    let cfg = config("three_level.toml");
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (k, dir) in runs.iter().enumerate() {
        let threads = if k == 0 { "1" } else { "4" };
        assert_eq!(oprg(&["oracle", "--config", cfg.to_str().unwrap(), "--threads", threads], dir.path()), 0);
    }
    for name in ["sweep.csv", "parity.csv", "truncation.csv"] {
        assert_eq!(read(runs[0].path().join(name)), read(runs[1].path().join(name)), "{name}");
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oprg(&["rg", "--config", "/nonexistent.toml"], dir.path()), 1);
    let record: serde_json::Value = serde_json::from_str(&read(dir.path().join("error.json"))).unwrap();
    assert_eq!(record["class"], "Config");
}
