use std::path::Path;
use std::process::{Command, Output};

use gravcollapse::config::parse_config_str;
use gravcollapse::hamiltonian::{assemble_hamiltonian, overflow_dt};
use gravcollapse::scenarios::pointer::{PointerCatSpec, PointerSetup};
use gravcollapse::BohmianConfiguration;

fn gravcollapse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gravcollapse"))
        .args(args)
        .env_remove("GRAVCOLLAPSE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    std::fs::write(&path, format!("{body}\n[output]\ndirectory = {:?}\n", out.to_str().unwrap())).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn estimate_prints_collapse_time() {
    let out = gravcollapse(&["estimate", "--mass", "1e-9", "--size", "1e-4", "--epsilon", "1e-3", "--scaled-size", "1e-6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let tau = v["collapse_time_s"].as_f64().unwrap();
    assert!((tau / 1e-6).log10().abs() <= 1.0, "tau = {tau}");
    let scaled = v["scaled"]["collapse_time_s"].as_f64().unwrap();
    assert!((scaled / 1e4).log10().abs() <= 1.0, "scaled tau = {scaled}");
    assert!((v["scaled"]["log_log_slope"].as_f64().unwrap() + 5.0).abs() < 1e-9);
}

#[test]
fn estimate_rejects_negative_mass() {
    let out = gravcollapse(&["estimate", "--mass=-1e-9", "--size", "1e-4", "--epsilon", "1e-3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"category\":\"domain\""));
}

#[test]
fn validate_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nkind = \"eigenstate_drift\"\n\n[model]\nepsilonn = 0.1\n");
    let out = gravcollapse(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epsilonn"), "{err}");
    assert!(err.contains("config-parse"), "{err}");
}

#[test]
fn validate_reports_violated_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nkind = \"eigenstate_drift\"\n\n[model]\nt_max = -1.0\n");
    let out = gravcollapse(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_max"));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = gravcollapse(&["run", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_emits_materialized_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nkind = \"pointer_cat\"\n");
    let out = gravcollapse(&["validate", "--emit", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse_config_str(&text).unwrap(), parse_config_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap());
    assert!(text.contains("points = 512"));
}

#[test]
fn run_eigenstate_drift_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nkind = \"eigenstate_drift\"\n");
    let out = gravcollapse(&["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out");
    let report = json(&base.join("report.json"));
    assert_eq!(report["kind"], "eigenstate_drift");
    let meta = json(&base.join("metadata.json"));
    assert!(meta["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["seed"], 0);
    let manifest = json(&base.join("manifest.json"));
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(files.contains(&"report.json") && files.contains(&"metadata.json"));
    let csv = std::fs::read_to_string(base.join("energy.csv")).unwrap();
    assert!(csv.starts_with("# gravcollapse-series v1"));
}

#[test]
fn run_with_zero_duration_reports_initial_state_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nkind = \"eigenstate_drift\"\n\n[model]\nt_max = 0.0\n");
    let out = gravcollapse(&["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("out/report.json"));
    assert_eq!(report["report"]["steps"], 0);
    let csv = std::fs::read_to_string(dir.path().join("out/energy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn unstable_dt_exits_with_integration_error() {
    let base = "[scenario]\nkind = \"pointer_cat\"\n";
    let cfg = parse_config_str(base).unwrap();
    let numerics = cfg.numerics();
    let setup = PointerSetup::new(&PointerCatSpec::default(), &numerics).unwrap();
    let q = BohmianConfiguration::new(vec![vec![setup.centers[0]]]);
    let bound = overflow_dt(&assemble_hamiltonian(&setup.psi0, &q, &setup.params).unwrap());
    assert!(bound.is_finite());
    let dt = 100.0 * bound;

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &format!("{base}\n[model]\ndt = {dt:e}\nt_max = {:e}\n", 5.0 * dt));
    let out = gravcollapse(&["run", &path]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let err = json(&dir.path().join("out/error.json"));
    assert_eq!(err["category"], "integration");
    assert!(err["diagnostic"]["non_finite_points"].as_u64().unwrap() > 0);
    assert_eq!(err["diagnostic"]["dt"].as_f64().unwrap(), dt);
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn sweep_runs_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[scenario]\nkind = \"two_branch_oracle\"\n\n[sweep]\n\"scenario.p\" = [0.2, 0.5, 0.8]\n",
    );
    let out = gravcollapse(&["sweep", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index = json(&dir.path().join("out/sweep.json"));
    assert_eq!(index["points"].as_array().unwrap().len(), 3);
    for i in 0..3 {
        assert!(dir.path().join(format!("out/point-{i:03}/report.json")).exists());
    }
}

#[test]
fn worker_count_from_environment_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nkind = \"two_branch_oracle\"\n");
    let out = Command::new(env!("CARGO_BIN_EXE_gravcollapse"))
        .args(["run", &cfg])
        .env("GRAVCOLLAPSE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&dir.path().join("out/metadata.json"))["workers"], 2);
}
