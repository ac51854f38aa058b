//! JSON run configuration. Omitted fields take the defaults
//! (`M = 16`, `N = 1e13`, `eps_target = 1e-5`); unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfqds::optimizer::{SearchSpace, SweepVariable, DIM};
use tfqds::{EstimationOptions, ProtocolParams, SecurityBudget, SystemParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridRange {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    /// Explicit grid; when empty, `range` is expanded instead.
    pub grid: Vec<f64>,
    pub range: GridRange,
    /// Re-optimize every point; otherwise evaluate `protocol` as given.
    pub optimize: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVariable::DistanceKm,
            grid: Vec::new(),
            range: GridRange { start: 0.0, stop: 400.0, step: 10.0 },
            optimize: true,
        }
    }
}

impl SweepConfig {
    pub fn resolved_grid(&self) -> Vec<f64> {
        if self.grid.is_empty() {
            self.range.points()
        } else {
            self.grid.clone()
        }
    }
}

/// Box bounds for the seven optimized parameters `(w, v, u, p_Z, p_s, p_w, p_v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchBounds {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
}

impl Default for SearchBounds {
    fn default() -> Self {
        let s = SearchSpace::default();
        Self { lower: s.lower, upper: s.upper }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub report: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
    pub trace_csv: Option<PathBuf>,
    pub simulation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemParams,
    /// Evaluated point for `rate`, `simulate` and fixed sweeps; optimizer warm start otherwise.
    pub protocol: ProtocolParams,
    pub budget: SecurityBudget,
    pub search: SearchBounds,
    pub sweep: SweepConfig,
    pub estimation: EstimationOptions,
    pub seed: u64,
    /// Latin-hypercube starts per optimization.
    pub effort: usize,
    pub trials: u64,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            protocol: ProtocolParams::default(),
            budget: SecurityBudget::default(),
            search: SearchBounds::default(),
            sweep: SweepConfig::default(),
            estimation: EstimationOptions::default(),
            seed: 0,
            effort: 8,
            trials: 10_000,
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn search_space(&self) -> SearchSpace {
        SearchSpace { lower: self.search.lower, upper: self.search.upper, base: self.protocol }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system.validate()?;
        self.protocol.validate()?;
        self.budget.validate()?;
        self.search_space().validate()?;
        let grid = self.sweep.resolved_grid();
        if !(self.sweep.range.step > 0.0) && self.sweep.grid.is_empty() {
            return Err(CliError::Invalid("sweep range step must be positive".into()));
        }
        if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Invalid("sweep grid must be nonempty and strictly increasing".into()));
        }
        let outputs = [&self.output.report, &self.output.sweep_csv, &self.output.trace_csv, &self.output.simulation];
        for p in outputs.into_iter().flatten() {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                if !dir.is_dir() {
                    return Err(CliError::Invalid(format!("output directory {} does not exist", dir.display())));
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a config file; an empty file yields the defaults.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let cfg = parse_config(&text).map_err(|e| match e {
        CliError::Parse { line, column, message, .. } => CliError::Parse { path: path.to_path_buf(), line, column, message },
        other => other,
    })?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = if text.trim().is_empty() {
        RunConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            path: PathBuf::new(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}
