//! Running configurations and writing their results.
//!
//! A run directory holds
//!
//! * `report.json`: scenario kind, crate version, the materialized
//!   configuration and the scenario report. It depends only on the
//!   configuration, so identical configurations give byte-identical files.
//! * `<series>.csv`: one file per series, starting with a
//!   `# gravcollapse-series v1 ...` comment line followed by the column names.
//! * `<state>.gcck`: binary checkpoints (see [`crate::checkpoint`]) when the
//!   `checkpoint` format is selected.
//! * `metadata.json`: configuration copy, seed, version, wall time, worker
//!   count and timestamp.
//! * `error.json` instead of the results when the run fails.
//! * `manifest.json`: every other file with its SHA-256 and size.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::{encode, Precision};
use crate::config::{expand_sweep, OutputFormat, RunConfig};
use crate::scenarios::{run_scenario, ScenarioOutput, Series};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_SCHEMA: &str = "gravcollapse-series v1";
pub const WORKERS_ENV: &str = "GRAVCOLLAPSE_WORKERS";

/// Exit status for a failed run: 1 for configuration problems, 2 for
/// integration failures, 3 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ConfigParse { .. } | Error::ConfigValidation(_) => 1,
        Error::Integration(_) => 2,
        _ => 3,
    }
}

/// Configures the global worker pool with `requested` workers, falling back
/// to `GRAVCOLLAPSE_WORKERS`, and returns the number of workers in use.
pub fn init_workers(requested: Option<usize>) -> Result<usize> {
    let n = match requested {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Error::ConfigValidation(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::ConfigValidation("worker count must be positive".into()));
        }
        // A pool that is already built keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Machine-readable description of a failure.
pub fn error_payload(err: &Error) -> serde_json::Value {
    let mut v = serde_json::json!({
        "category": err.category(),
        "exit_code": exit_code(err),
        "message": err.to_string(),
    });
    match err {
        Error::Integration(d) => v["diagnostic"] = serde_json::to_value(d).unwrap_or(serde_json::Value::Null),
        Error::ConfigParse { line: Some(l), .. } => v["line"] = (*l).into(),
        _ => {}
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub files: Vec<ManifestEntry>,
}

/// Collects files in memory and writes them one after another.
struct Writer {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Spec(format!("{name}: {e}")))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn finish(mut self) -> Result<RunSummary> {
        let manifest = serde_json::json!({ "version": VERSION, "files": &self.entries });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Spec(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(RunSummary {
            directory: self.dir,
            files: self.entries,
        })
    }
}

pub fn series_csv(series: &Series) -> String {
    let mut out = format!(
        "# {CSV_SCHEMA} name={} columns={} rows={}\n{}\n",
        series.name,
        series.columns.len(),
        series.rows.len(),
        series.columns.join(",")
    );
    for row in &series.rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Deterministic JSON report of a finished scenario.
pub fn report_json(config: &RunConfig, output: &ScenarioOutput) -> Result<String> {
    let v = serde_json::json!({
        "kind": output.kind,
        "version": VERSION,
        "config": config,
        "report": output.report,
    });
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| Error::Spec(format!("report: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn unix_time() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn metadata(config: &RunConfig, wall_time: f64, status: &str) -> serde_json::Value {
    serde_json::json!({
        "version": VERSION,
        "status": status,
        "seed": config.numerics().seed,
        "ensemble_seed": config.ensemble.as_ref().map(|e| e.base_seed),
        "wall_time_seconds": wall_time,
        "workers": rayon::current_num_threads(),
        "timestamp_unix": unix_time(),
        "config": config,
    })
}

fn write_results(dir: &Path, config: &RunConfig, output: &ScenarioOutput, wall_time: f64) -> Result<RunSummary> {
    let mut w = Writer::new(dir)?;
    let formats = &config.output.formats;
    if formats.contains(&OutputFormat::Json) {
        w.put("report.json", report_json(config, output)?.as_bytes())?;
    }
    if formats.contains(&OutputFormat::Csv) {
        for s in &output.series {
            w.put(&format!("{}.csv", s.name), series_csv(s).as_bytes())?;
        }
    }
    if formats.contains(&OutputFormat::Checkpoint) {
        for s in &output.states {
            w.put(&format!("{}.gcck", s.name), &encode(&s.psi, s.time, s.step, Precision::Complex128))?;
        }
    }
    w.put_json("metadata.json", &metadata(config, wall_time, "ok"))?;
    w.finish()
}

/// Writes `error.json`, `metadata.json` and the manifest for a failed run.
pub fn write_error(dir: &Path, config: Option<&RunConfig>, err: &Error, wall_time: f64) -> Result<RunSummary> {
    let mut w = Writer::new(dir)?;
    w.put_json("error.json", &error_payload(err))?;
    if let Some(c) = config {
        w.put_json("metadata.json", &metadata(c, wall_time, "error"))?;
    }
    w.finish()
}

/// Runs the configuration and writes its results into `dir`. On failure the
/// error files are written before the error is returned.
pub fn execute_in(config: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    let result = config
        .validate()
        .and_then(|_| run_scenario(&config.scenario, &config.numerics(), config.ensemble_spec().as_ref()));
    let wall = start.elapsed().as_secs_f64();
    match result {
        Ok(out) => write_results(dir, config, &out, wall),
        Err(e) => {
            write_error(dir, Some(config), &e, wall)?;
            Err(e)
        }
    }
}

/// Runs the configuration into its `output.directory`.
pub fn execute(config: &RunConfig) -> Result<RunSummary> {
    execute_in(config, &config.output.directory)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub label: String,
    pub directory: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
}

/// Runs every sweep point into `point-NNN` subdirectories and writes a
/// `sweep.json` index. All points run even if some fail; the first failure is
/// returned afterwards.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<SweepEntry>> {
    let points = expand_sweep(config)?;
    let root = config.output.directory.clone();
    let mut entries = Vec::with_capacity(points.len());
    let mut first_error = None;
    for (i, p) in points.iter().enumerate() {
        let name = format!("point-{i:03}");
        let result = execute_in(&p.config, &root.join(&name));
        let (status, error) = match result {
            Ok(_) => ("ok".to_string(), None),
            Err(e) => {
                let payload = error_payload(&e);
                first_error.get_or_insert(e);
                ("error".to_string(), Some(payload))
            }
        };
        entries.push(SweepEntry {
            index: i,
            label: p.label.clone(),
            directory: name,
            status,
            error,
        });
    }
    let mut w = Writer::new(&root)?;
    w.put_json(
        "sweep.json",
        &serde_json::json!({ "version": VERSION, "points": &entries }),
    )?;
    w.finish()?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(entries),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;
    use crate::error::NanDiagnostic;

    fn oracle_config(dir: &Path) -> RunConfig {
        parse_config_str(&format!(
            "[scenario]\nkind = \"two_branch_oracle\"\n\n[output]\ndirectory = {:?}\n",
            dir.to_str().unwrap()
        ))
        .unwrap()
    }

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(exit_code(&Error::ConfigValidation("x".into())), 1);
        assert_eq!(exit_code(&Error::ConfigParse { message: "x".into(), line: Some(3) }), 1);
        let d = NanDiagnostic {
            step: 1,
            time: 0.1,
            dt: 0.1,
            norm_squared: f64::NAN,
            non_finite_points: 4,
            max_abs_hermitian_potential: 0.0,
            max_localization_potential: 1.0,
            positions: vec![vec![0.0]],
        };
        let e = Error::Integration(Box::new(d));
        assert_eq!(exit_code(&e), 2);
        assert_eq!(error_payload(&e)["diagnostic"]["non_finite_points"], 4);
        assert_eq!(exit_code(&Error::Domain("x".into())), 3);
    }

    #[test]
    fn csv_has_versioned_header() {
        let mut s = Series::new("w", &["t", "a"]);
        s.push(vec![0.0, 0.5]);
        s.push(vec![1.5, f64::NAN]);
        let text = series_csv(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# gravcollapse-series v1 name=w columns=2 rows=2");
        assert_eq!(lines[1], "t,a");
        assert_eq!(lines[2], "0,0.5");
        assert_eq!(lines[3], "1.5,NaN");
    }

    #[test]
    fn run_writes_manifested_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = oracle_config(dir.path());
        let summary = execute(&cfg).unwrap();
        let names: Vec<&str> = summary.files.iter().map(|f| f.path.as_str()).collect();
        assert!(names.contains(&"report.json"));
        assert!(names.contains(&"metadata.json"));
        assert!(names.iter().any(|n| n.ends_with(".csv")));
        for f in &summary.files {
            let bytes = std::fs::read(dir.path().join(&f.path)).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), f.sha256);
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["files"].as_array().unwrap().len(), summary.files.len());
    }

    #[test]
    fn reports_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = oracle_config(dir.path());
        execute(&cfg).unwrap();
        let first = std::fs::read(dir.path().join("report.json")).unwrap();
        execute(&cfg).unwrap();
        assert_eq!(std::fs::read(dir.path().join("report.json")).unwrap(), first);
    }

    #[test]
    fn sweep_writes_points_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = oracle_config(dir.path());
        cfg.sweep.insert(
            "scenario.p".into(),
            vec![toml::Value::Float(0.3), toml::Value::Float(0.6)],
        );
        let entries = run_sweep(&cfg).unwrap();
        assert_eq!(entries.len(), 2);
        assert!(dir.path().join("point-001/report.json").exists());
        assert!(dir.path().join("sweep.json").exists());
    }
}
