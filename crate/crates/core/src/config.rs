//! Run configuration: a TOML file with `model`, `chain`, `grid`,
//! `experiment` and `output` tables. Every referenced field is validated
//! before any computation starts; an invalid config produces an error
//! naming the offending field path.

use crate::dynamics::ChainSpec;
use crate::model::ModelParams;
use crate::quadrature::{GridSpec, QuadRule};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyGeometry,
    AuditModel,
    SingleSite,
    SweepDecay,
    Inequality,
    LsiScan,
    Telescoping,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Required when `kind = "inequality"`: one of `ubound`, `poincare`,
    /// `weak-lsi`, `sweep`, `sqrt-sweep`, `covariance`, `global-lsi`,
    /// `tail-bound`.
    #[serde(default)]
    pub inequality: Option<String>,
    /// Coupling grid for scan experiments.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    /// Sweep horizon for decay / telescoping experiments.
    #[serde(default)]
    pub n_max: Option<u64>,
    /// Comparison window for the global entropy fit.
    #[serde(default)]
    pub alt_window: Option<(usize, usize)>,
    /// Sample points for geometry / audit experiments.
    #[serde(default)]
    pub sample_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default = "default_true")]
    pub json: bool,
    #[serde(default)]
    pub svg_plots: bool,
    /// Worker threads for replica-parallel experiments. The runner owns the
    /// budget; 1 means fully sequential.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_points")]
    pub points_per_axis: usize,
    #[serde(default = "default_rule")]
    pub rule: QuadRule,
    /// Explicit truncation half-widths per axis; adaptive when absent.
    #[serde(default)]
    pub half_widths: Option<Vec<f64>>,
}

fn default_points() -> usize {
    64
}

fn default_rule() -> QuadRule {
    QuadRule::GaussLegendre
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            points_per_axis: default_points(),
            rule: default_rule(),
            half_widths: None,
        }
    }
}

impl GridConfig {
    pub fn resolve(&self, params: &ModelParams) -> GridSpec {
        GridSpec {
            points_per_axis: self.points_per_axis,
            rule: self.rule,
            half_widths: self
                .half_widths
                .clone()
                .unwrap_or_else(|| GridSpec::adaptive_half_widths(params)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub grid: GridConfig,
    pub experiment: ExperimentSpec,
    pub output: OutputSpec,
}

/// Fields that must be present before serde gets a chance to fill defaults,
/// checked on the raw TOML value so the error can name the full path.
const REQUIRED: &[(&str, &[&str])] = &[
    ("model", &["spin-space", "p", "r", "delta", "lattice"]),
    ("experiment", &["kind"]),
    ("output", &["dir"]),
];

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: toml::Value = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("<toml>", e.to_string()))?;
    for (table, keys) in REQUIRED {
        let t = value
            .get(table)
            .ok_or_else(|| ConfigError::new(table, "missing table"))?;
        for key in *keys {
            if t.get(key).is_none() {
                return Err(ConfigError::new(
                    &format!("{table}.{key}"),
                    "missing required field",
                ));
            }
        }
    }
    if let Some(lat) = value.get("model").and_then(|m| m.get("lattice")) {
        for key in ["width", "height"] {
            if lat.get(key).is_none() {
                return Err(ConfigError::new(
                    &format!("model.lattice.{key}"),
                    "missing required field",
                ));
            }
        }
    }
    let cfg: RunConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::new("<schema>", e.to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    cfg.model
        .validate()
        .map_err(|e| ConfigError::new("model", e.to_string()))?;
    if cfg.chain.proposal_scale <= 0.0 || !cfg.chain.proposal_scale.is_finite() {
        return Err(ConfigError::new(
            "chain.proposal-scale",
            "must be positive and finite",
        ));
    }
    if cfg.chain.inner_resample_steps == 0 {
        return Err(ConfigError::new(
            "chain.inner-resample-steps",
            "must be at least 1",
        ));
    }
    if cfg.grid.points_per_axis < 16 {
        return Err(ConfigError::new(
            "grid.points-per-axis",
            "must be at least 16",
        ));
    }
    if let Some(hw) = &cfg.grid.half_widths {
        if hw.len() != cfg.model.spin_space.dim() {
            return Err(ConfigError::new(
                "grid.half-widths",
                format!(
                    "expected {} entries for the active spin space, got {}",
                    cfg.model.spin_space.dim(),
                    hw.len()
                ),
            ));
        }
        if hw.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(ConfigError::new(
                "grid.half-widths",
                "entries must be positive and finite",
            ));
        }
    }
    if cfg.experiment.kind == ExperimentKind::Inequality {
        let name = cfg
            .experiment
            .inequality
            .as_deref()
            .ok_or_else(|| ConfigError::new("experiment.inequality", "missing required field"))?;
        const KNOWN: &[&str] = &[
            "ubound",
            "poincare",
            "weak-lsi",
            "sweep",
            "sqrt-sweep",
            "covariance",
            "global-lsi",
            "tail-bound",
        ];
        if !KNOWN.contains(&name) {
            return Err(ConfigError::new(
                "experiment.inequality",
                format!("unknown inequality `{name}`; expected one of {KNOWN:?}"),
            ));
        }
    }
    if let Some(deltas) = &cfg.experiment.deltas {
        if deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(ConfigError::new(
                "experiment.deltas",
                "entries must be nonnegative and finite",
            ));
        }
    }
    if cfg.output.workers == 0 {
        return Err(ConfigError::new("output.workers", "must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[model]
spin-space = "line"
p = 4
r = 3
delta = 0.05

[model.lattice]
width = 4
height = 4
boundary = "identity"

[chain]
seed = 7
proposal-scale = 0.5
inner-resample-steps = 32
burn-in = 100
n-samples = 200
thinning = 2

[experiment]
kind = "audit-model"

[output]
dir = "out"
"#;

    #[test]
    fn good_config_parses() {
        let cfg = parse_config(GOOD).unwrap();
        assert_eq!(cfg.model.p, 4);
        assert_eq!(cfg.chain.seed, 7);
        assert_eq!(cfg.experiment.kind, ExperimentKind::AuditModel);
        assert!(cfg.output.csv && cfg.output.json && !cfg.output.svg_plots);
        let grid = cfg.grid.resolve(&cfg.model);
        assert_eq!(grid.half_widths.len(), 1);
    }

    #[test]
    fn missing_p_names_the_field() {
        let broken = GOOD.replace("p = 4\n", "");
        let err = parse_config(&broken).unwrap_err();
        assert_eq!(err.path, "model.p", "{err}");
    }

    #[test]
    fn missing_lattice_dimensions_are_named() {
        let broken = GOOD.replace("height = 4\n", "");
        let err = parse_config(&broken).unwrap_err();
        assert_eq!(err.path, "model.lattice.height");
    }

    #[test]
    fn inequality_kind_requires_a_name() {
        let broken = GOOD.replace("kind = \"audit-model\"", "kind = \"inequality\"");
        let err = parse_config(&broken).unwrap_err();
        assert_eq!(err.path, "experiment.inequality");

        let ok = GOOD.replace(
            "kind = \"audit-model\"",
            "kind = \"inequality\"\ninequality = \"ubound\"",
        );
        assert!(parse_config(&ok).is_ok());

        let bad = GOOD.replace(
            "kind = \"audit-model\"",
            "kind = \"inequality\"\ninequality = \"nonsense\"",
        );
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn negative_delta_is_rejected() {
        let broken = GOOD.replace("delta = 0.05", "delta = -1.0");
        let err = parse_config(&broken).unwrap_err();
        assert_eq!(err.path, "model");
    }

    #[test]
    fn heisenberg_half_widths_must_match_dimension() {
        let cfg = GOOD
            .replace("spin-space = \"line\"", "spin-space = \"heisenberg1\"")
            .replace("[experiment]", "[grid]\nhalf-widths = [2.0]\n\n[experiment]");
        let err = parse_config(&cfg).unwrap_err();
        assert_eq!(err.path, "grid.half-widths");
    }
}
