//! Command dispatch and output writing for the `tfqds` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;
use tfqds::optimizer::{optimize, sweep, OptimizeOptions, OptimizeResult, SweepRow, SweepSpec};
use tfqds::security::rate_report;
use tfqds::simulator::simulate;

pub use config::{load_config, parse_config, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] tfqds::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Error = 1,
    Infeasible = 2,
}

fn status(feasible: bool) -> Status {
    if feasible {
        Status::Ok
    } else {
        Status::Infeasible
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Writes to `path`, or to stdout when `None`.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(io_err(p)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// 17 significant digits, so values round-trip exactly.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NaN".into()
    }
}

pub const SWEEP_COLUMNS: [&str; 16] = [
    "grid_value", "w", "v", "u", "p_Z", "p_s", "p_w", "p_v", "L", "n_pool", "n_bits", "R", "P_robust",
    "P_repudiation", "P_forge", "feasible",
];

pub fn sweep_record(row: &SweepRow) -> Vec<String> {
    let p = &row.proto;
    let mut rec: Vec<String> = [row.grid_value, p.w, p.v, p.u, p.p_z, p.p_s, p.p_w, p.p_v].map(fmt_num).to_vec();
    match &row.report {
        Some(r) => {
            rec.push(r.l.to_string());
            rec.extend([r.n_pool, r.n_bits, r.rate, r.p_robust, r.p_repudiation, r.p_forge].map(fmt_num));
            rec.push(r.feasible.to_string());
        }
        None => {
            rec.extend(std::iter::repeat_n("NaN".to_string(), 7));
            rec.push("false".into());
        }
    }
    rec
}

pub fn write_sweep_csv(rows: &[SweepRow], path: Option<&Path>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for row in rows {
        w.write_record(sweep_record(row))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))?;
    emit(path, &bytes)
}

pub fn write_trace_csv(res: &OptimizeResult, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["start", "warm", "initial_score", "final_score", "R", "feasible", "evaluations"])?;
    for t in &res.trace {
        w.write_record([
            t.start.to_string(),
            t.warm.to_string(),
            fmt_num(t.initial_score),
            fmt_num(t.final_score),
            fmt_num(t.rate),
            t.feasible.to_string(),
            t.evaluations.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn run_rate(cfg: &RunConfig) -> Result<Status, CliError> {
    let report = rate_report(&cfg.system, &cfg.protocol, &cfg.budget, cfg.estimation)?;
    emit(cfg.output.report.as_deref(), &json(&report)?)?;
    Ok(status(report.feasible))
}

pub fn sweep_spec(cfg: &RunConfig) -> SweepSpec {
    SweepSpec {
        variable: cfg.sweep.variable,
        grid: cfg.sweep.resolved_grid(),
        system: cfg.system,
        optimize: cfg.sweep.optimize,
        space: cfg.search_space(),
        options: optimize_options(cfg),
    }
}

fn optimize_options(cfg: &RunConfig) -> OptimizeOptions {
    OptimizeOptions { seed: cfg.seed, effort: cfg.effort, warm_starts: Vec::new(), estimation: cfg.estimation }
}

pub fn run_sweep(cfg: &RunConfig) -> Result<Status, CliError> {
    let rows = sweep(&sweep_spec(cfg), &cfg.budget)?;
    write_sweep_csv(&rows, cfg.output.sweep_csv.as_deref())?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("grid point {}: {}", r.grid_value, r.error.as_deref().unwrap_or_default());
    }
    Ok(status(rows.iter().any(SweepRow::feasible)))
}

pub fn run_optimize(cfg: &RunConfig) -> Result<Status, CliError> {
    let res = optimize(&cfg.system, &cfg.budget, &cfg.search_space(), &optimize_options(cfg))?;
    #[derive(serde::Serialize)]
    struct Best<'a> {
        protocol: &'a tfqds::ProtocolParams,
        report: &'a tfqds::SignatureReport,
        evaluations: usize,
    }
    emit(cfg.output.report.as_deref(), &json(&Best { protocol: &res.proto, report: &res.report, evaluations: res.evaluations })?)?;
    if let Some(p) = &cfg.output.trace_csv {
        write_trace_csv(&res, p)?;
    }
    Ok(status(res.report.feasible))
}

pub fn run_simulate(cfg: &RunConfig) -> Result<Status, CliError> {
    if cfg.trials == 0 {
        return Err(CliError::Invalid("trials must be positive".into()));
    }
    let summary = simulate(&cfg.system, &cfg.protocol, &cfg.budget, cfg.trials, cfg.seed, cfg.estimation)?;
    emit(cfg.output.simulation.as_deref(), &json(&summary)?)?;
    Ok(status(summary.expected.feasible))
}

pub fn run_show_config(cfg: &RunConfig) -> Result<Status, CliError> {
    emit(None, &json(cfg)?)?;
    Ok(Status::Ok)
}
