use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crs_core::ode::DEFAULT_STEP;
use crs_core::sbm::{validate_params, RawSbmParams, SbmParams};
use crs_core::simulator::HiddenPool;

pub const DEFAULT_STOP_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_OUTPUT_DIR: &str = "crs-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Monte-Carlo ensemble of the chain.
    Simulate,
    /// Fluid-limit path only.
    Ode,
    /// Ensemble with `d₁` against the fluid limit.
    Compare,
    /// Mean `d₁` as a function of `N`.
    Sweep,
    /// `t₀` and discovered proportion as functions of `c`.
    Tables,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Ode => "ode",
            Mode::Compare => "compare",
            Mode::Sweep => "sweep",
            Mode::Tables => "tables",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawSbmParams,
    mode: Mode,
    #[serde(default = "default_replicates")]
    replicates: usize,
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_step")]
    ode_step: f64,
    #[serde(default = "default_stop")]
    stop_threshold: f64,
    #[serde(default)]
    probe_times: Vec<f64>,
    #[serde(default)]
    c_list: Vec<usize>,
    #[serde(default)]
    n_list: Vec<usize>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    hidden_pool: HiddenPool,
    #[serde(default)]
    charts: bool,
    /// Replicates whose full trajectory is written out.
    #[serde(default = "default_exported")]
    export_trajectories: usize,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_stop() -> f64 {
    DEFAULT_STOP_THRESHOLD
}

fn default_exported() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: SbmParams,
    pub mode: Mode,
    pub replicates: usize,
    pub master_seed: u64,
    pub ode_step: f64,
    pub stop_threshold: f64,
    pub probe_times: Vec<f64>,
    pub c_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub output_dir: PathBuf,
    pub hidden_pool: HiddenPool,
    pub charts: bool,
    pub export_trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {field}: {constraint}")]
    Validation { field: String, constraint: String },
}

fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        constraint: constraint.into(),
    }
}

/// Parses and validates a JSON experiment document, applying defaults.
///
/// Returns every validation failure of the model block at once; the remaining
/// checks stop at the first violation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
        vec![ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }]
    })?;
    let model = validate_params(raw.model).map_err(|errs| {
        errs.0
            .iter()
            .map(|e| invalid(format!("model.{}", e.field()), e.to_string()))
            .collect::<Vec<_>>()
    })?;
    let cfg = ExperimentConfig {
        model,
        mode: raw.mode,
        replicates: raw.replicates,
        master_seed: raw.master_seed,
        ode_step: raw.ode_step,
        stop_threshold: raw.stop_threshold,
        probe_times: raw.probe_times,
        c_list: raw.c_list,
        n_list: raw.n_list,
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        hidden_pool: raw.hidden_pool,
        charts: raw.charts,
        export_trajectories: raw.export_trajectories,
    };
    check(&cfg).map_err(|e| vec![e])?;
    Ok(cfg)
}

fn check(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    if !(cfg.ode_step > 0.0 && cfg.ode_step <= 1.0) {
        return Err(invalid(
            "ode_step",
            format!("{} must lie in (0, 1]", cfg.ode_step),
        ));
    }
    if !(cfg.stop_threshold > 0.0 && cfg.stop_threshold < 1.0) {
        return Err(invalid(
            "stop_threshold",
            format!("{} must lie in (0, 1)", cfg.stop_threshold),
        ));
    }
    if let Some(t) = cfg.probe_times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(invalid("probe_times", format!("{t} is outside [0, 1]")));
    }
    let stochastic = matches!(
        cfg.mode,
        Mode::Simulate | Mode::Compare | Mode::Sweep | Mode::Tables
    );
    if stochastic && cfg.replicates == 0 {
        return Err(invalid("replicates", "must be at least 1"));
    }
    match cfg.mode {
        Mode::Sweep => {
            if cfg.n_list.is_empty() {
                return Err(invalid("n_list", "required and non-empty for mode sweep"));
            }
            for &n in &cfg.n_list {
                cfg.model
                    .with_population(n)
                    .map_err(|e| invalid("n_list", format!("N = {n}: {e}")))?;
            }
        }
        Mode::Tables => {
            if cfg.c_list.is_empty() {
                return Err(invalid("c_list", "required and non-empty for mode tables"));
            }
            if cfg.c_list.contains(&0) {
                return Err(invalid("c_list", "coupon caps must be positive"));
            }
        }
        Mode::Simulate | Mode::Ode | Mode::Compare => {}
    }
    Ok(())
}

/// The `output_dir` of a document that failed to parse, if it can still be read.
pub fn salvage_output_dir(text: &str) -> Option<PathBuf> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    value.get("output_dir")?.as_str().map(PathBuf::from)
}
