//! TOML run configuration.
//!
//! ```toml
//! [scenario]
//! kind = "pointer_cat"
//! weight_left = 0.36
//! start = "sampled"
//!
//! [grid]
//! points = 512
//! length = 40.0
//!
//! [model]
//! epsilon = 0.1
//!
//! [ensemble]
//! n_runs = 400
//! base_seed = 7
//!
//! [output]
//! directory = "out"
//!
//! [sweep]
//! "model.epsilon" = [0.05, 0.1, 0.2]
//! ```
//!
//! Unknown keys are rejected everywhere. Unset `grid` and `model` entries
//! take the scenario's defaults when the file is parsed, so a parsed
//! configuration is complete; `model.dt` may stay unset, which selects the
//! step from the phase-error rule.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, DEFAULT_COLLAPSE_THRESHOLD};
use crate::propagator::FlowMode;
use crate::scenarios::{Numerics, ScenarioSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softening: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smear_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_mode: Option<FlowMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_self_terms: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_threshold")]
    pub collapse_threshold: f64,
    /// Defaults to `model.t_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

fn default_threshold() -> f64 {
    DEFAULT_COLLAPSE_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    /// Binary wavefunction checkpoints of scenarios that keep a final state.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("gravcollapse-out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub output: OutputSection,
    /// Dotted key paths mapped to the values they take in a sweep.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    Error::ConfigParse {
        message: e.message().trim().to_string(),
        line: e.span().map(|s| line_of(text, s.start)),
    }
}

impl RunConfig {
    /// Fills unset grid and model entries from the scenario defaults.
    pub fn materialize(&mut self) {
        let d = self.scenario.default_numerics();
        let g = &mut self.grid;
        g.points.get_or_insert(d.grid_points);
        g.length.get_or_insert(d.box_length);
        let m = &mut self.model;
        m.epsilon.get_or_insert(d.epsilon);
        m.hbar.get_or_insert(d.hbar);
        m.softening.get_or_insert(d.softening);
        m.smear_length.get_or_insert(d.smear_length);
        m.t_max.get_or_insert(d.t_max);
        m.seed.get_or_insert(d.seed);
        m.flow_mode.get_or_insert(d.flow_mode);
        m.localization_self_terms.get_or_insert(d.localization_self_terms);
        if m.dt.is_none() {
            m.dt = d.dt;
        }
        let t_max = m.t_max;
        if let Some(e) = &mut self.ensemble {
            if e.t_max.is_none() {
                e.t_max = t_max;
            }
        }
    }

    pub fn numerics(&self) -> Numerics {
        let d = self.scenario.default_numerics();
        let m = &self.model;
        Numerics {
            grid_points: self.grid.points.unwrap_or(d.grid_points),
            box_length: self.grid.length.unwrap_or(d.box_length),
            epsilon: m.epsilon.unwrap_or(d.epsilon),
            hbar: m.hbar.unwrap_or(d.hbar),
            softening: m.softening.unwrap_or(d.softening),
            smear_length: m.smear_length.unwrap_or(d.smear_length),
            dt: m.dt.or(d.dt),
            t_max: m.t_max.unwrap_or(d.t_max),
            seed: m.seed.unwrap_or(d.seed),
            flow_mode: m.flow_mode.unwrap_or(d.flow_mode),
            localization_self_terms: m.localization_self_terms.unwrap_or(d.localization_self_terms),
        }
    }

    pub fn ensemble_spec(&self) -> Option<EnsembleSpec> {
        let t_max = self.numerics().t_max;
        self.ensemble.as_ref().map(|e| EnsembleSpec {
            n_runs: e.n_runs,
            base_seed: e.base_seed,
            collapse_threshold: e.collapse_threshold,
            t_max: e.t_max.unwrap_or(t_max),
        })
    }

    /// Checks every invariant; errors name the violated one.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::ConfigValidation(e.to_string());
        self.scenario.validate().map_err(wrap)?;
        self.numerics().validate().map_err(wrap)?;
        if let Some(e) = self.ensemble_spec() {
            e.validate().map_err(wrap)?;
        }
        if self.output.formats.is_empty() {
            return Err(Error::ConfigValidation("output.formats must not be empty".into()));
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err(Error::ConfigValidation("output.directory must not be empty".into()));
        }
        for (k, v) in &self.sweep {
            if v.is_empty() {
                return Err(Error::ConfigValidation(format!("sweep key `{k}` has no values")));
            }
        }
        Ok(())
    }
}

/// Parses, materializes and validates a configuration given as text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    if text.trim().is_empty() {
        return Err(Error::ConfigParse {
            message: "configuration is empty".into(),
            line: None,
        });
    }
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    cfg.materialize();
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// TOML text that parses back to an equal configuration.
pub fn emit(config: &RunConfig) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::ConfigValidation(format!("cannot serialize configuration: {e}")))
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::ConfigValidation(format!("malformed sweep key `{path}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::ConfigValidation(format!("sweep key `{path}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// `key=value` pairs joined by commas.
    pub label: String,
    pub config: RunConfig,
}

/// Cartesian product of the `[sweep]` values, each applied to the base
/// configuration and re-validated. Without a sweep table the base
/// configuration is the only point.
pub fn expand_sweep(config: &RunConfig) -> Result<Vec<SweepPoint>> {
    let mut base = config.clone();
    let sweep = std::mem::take(&mut base.sweep);
    let base_value = match toml::Value::try_from(&base) {
        Ok(toml::Value::Table(t)) => t,
        Ok(_) => return Err(Error::ConfigValidation("configuration is not a table".into())),
        Err(e) => return Err(Error::ConfigValidation(format!("cannot serialize configuration: {e}"))),
    };
    let keys: Vec<&String> = sweep.keys().collect();
    let mut points = Vec::new();
    let total: usize = sweep.values().map(|v| v.len()).product();
    for mut index in 0..total {
        let mut table = base_value.clone();
        let mut label = Vec::new();
        for k in keys.iter().rev() {
            let values = &sweep[*k];
            let v = values[index % values.len()].clone();
            index /= values.len();
            label.push(format!("{k}={}", value_label(&v)));
            set_path(&mut table, k, v)?;
        }
        label.reverse();
        let text = toml::to_string(&table).map_err(|e| Error::ConfigValidation(e.to_string()))?;
        let cfg = parse_config_str(&text).map_err(|e| match e {
            Error::ConfigParse { message, .. } => Error::ConfigValidation(format!("sweep point {}: {message}", label.join(","))),
            other => other,
        })?;
        points.push(SweepPoint {
            label: label.join(","),
            config: cfg,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_completed() {
        let cfg = parse_config_str("[scenario]\nkind = \"eigenstate_drift\"\n").unwrap();
        assert_eq!(cfg.grid.points, Some(128));
        assert_eq!(cfg.model.epsilon, Some(1e-2));
        assert_eq!(cfg.model.flow_mode, Some(FlowMode::Normalized));
        assert!(cfg.model.dt.is_none());
        assert_eq!(cfg.output, OutputSection::default());
        match &cfg.scenario {
            ScenarioSpec::EigenstateDrift(s) => assert_eq!(s.omega, 1.0),
            other => panic!("unexpected scenario {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "[scenario]\nkind = \"pointer_cat\"\n\n[model]\nepsilonn = 0.1\n";
        let err = parse_config_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::ConfigParse { .. }));
        assert!(msg.contains("epsilonn"), "{msg}");
        assert!(msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn unknown_scenario_key_is_named() {
        let err = parse_config_str("[scenario]\nkind = \"pointer_cat\"\nmas = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("mas"), "{err}");
        let err = parse_config_str("[scenario]\nkind = \"teleport\"\n").unwrap_err();
        assert!(err.to_string().contains("teleport"), "{err}");
    }

    #[test]
    fn validation_names_invariant() {
        let err = parse_config_str("[scenario]\nkind = \"pointer_cat\"\nweight_left = 1.5\n").unwrap_err();
        assert!(matches!(err, Error::ConfigValidation(_)));
        assert!(err.to_string().contains("weight_left"), "{err}");
        let err = parse_config_str("[scenario]\nkind = \"pointer_cat\"\n[ensemble]\nn_runs = 0\n").unwrap_err();
        assert!(err.to_string().contains("n_runs"), "{err}");
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(parse_config_str("  \n"), Err(Error::ConfigParse { .. })));
    }

    #[test]
    fn round_trip() {
        let text = r#"
[scenario]
kind = "scaling_sweep"
epsilons = [0.001, 0.1]

[grid]
points = 256

[model]
dt = 0.01
flow_mode = "unnormalized"

[ensemble]
n_runs = 10
base_seed = 3

[sweep]
"model.epsilon" = [0.1, 0.2]
"#;
        let cfg = parse_config_str(text).unwrap();
        let again = parse_config_str(&emit(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.ensemble_spec().unwrap().t_max, 40.0);
    }

    #[test]
    fn every_scenario_round_trips() {
        for kind in [
            "eigenstate_drift",
            "hydrogen_analog",
            "pointer_cat",
            "scaling_sweep",
            "mass_identical_superposition",
            "bipartite_no_signal",
            "two_branch_oracle",
        ] {
            let cfg = parse_config_str(&format!("[scenario]\nkind = \"{kind}\"\n")).unwrap();
            assert_eq!(cfg.scenario.kind(), kind);
            assert_eq!(parse_config_str(&emit(&cfg).unwrap()).unwrap(), cfg);
        }
    }

    #[test]
    fn sweep_expands_cartesian_product() {
        let text = r#"
[scenario]
kind = "pointer_cat"

[sweep]
"model.epsilon" = [0.1, 0.2]
"scenario.weight_left" = [0.3, 0.5, 0.7]
"#;
        let cfg = parse_config_str(text).unwrap();
        let pts = expand_sweep(&cfg).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].label, "model.epsilon=0.1,scenario.weight_left=0.3");
        assert_eq!(pts[5].config.model.epsilon, Some(0.2));
        match &pts[5].config.scenario {
            ScenarioSpec::PointerCat(s) => assert_eq!(s.weight_left, 0.7),
            _ => unreachable!(),
        }
        assert!(pts.iter().all(|p| p.config.sweep.is_empty()));
    }

    #[test]
    fn sweep_rejects_bad_keys() {
        let text = "[scenario]\nkind = \"pointer_cat\"\n[sweep]\n\"model.epsilonn\" = [0.1]\n";
        let cfg = parse_config_str(text).unwrap();
        let err = expand_sweep(&cfg).unwrap_err();
        assert!(err.to_string().contains("epsilonn"), "{err}");
    }

    #[test]
    fn no_sweep_is_single_point() {
        let cfg = parse_config_str("[scenario]\nkind = \"two_branch_oracle\"\n").unwrap();
        let pts = expand_sweep(&cfg).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].config, cfg);
    }
}
