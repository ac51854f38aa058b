use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tfqds::optimizer::SweepVariable;
use tfqds_cli::{
    load_config, run_optimize, run_rate, run_show_config, run_simulate, run_sweep, CliError, RunConfig, Status,
};

/// Twin-field quantum digital signature rates, sweeps, optimization and Monte Carlo.
#[derive(Debug, Parser)]
#[command(name = "tfqds", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags override the matching config fields.
#[derive(Debug, Args)]
struct Overrides {
    /// JSON configuration file; omitted fields take the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    distance_km: Option<f64>,
    #[arg(long, global = true)]
    e_d: Option<f64>,
    /// Number of pulse pairs.
    #[arg(long = "N", global = true)]
    pulses: Option<f64>,
    #[arg(long, global = true)]
    eps_target: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the as-printed effective-event error bound.
    #[arg(long, global = true)]
    as_printed: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Signature report at the configured protocol point (JSON).
    Rate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One CSV row per grid point.
    Sweep {
        #[arg(long, value_parser = parse_variable)]
        variable: Option<SweepVariable>,
        /// Evaluate the configured protocol instead of optimizing each point.
        #[arg(long)]
        fixed: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best protocol point (JSON) and per-start trace (CSV).
    Optimize {
        #[arg(long)]
        effort: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Monte Carlo trial statistics (JSON).
    Simulate {
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn parse_variable(s: &str) -> Result<SweepVariable, String> {
    match s {
        "distance_km" | "distance" => Ok(SweepVariable::DistanceKm),
        "e_d" => Ok(SweepVariable::Misalignment),
        _ => Err(format!("unknown sweep variable {s:?} (expected distance_km or e_d)")),
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.overrides.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(d) = o.distance_km {
        cfg.system.distance_km = d;
    }
    if let Some(e) = o.e_d {
        cfg.system.e_d = e;
    }
    if let Some(n) = o.pulses {
        cfg.protocol.pulses = n;
    }
    if let Some(e) = o.eps_target {
        cfg.budget.eps_target = e;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.as_printed {
        cfg.estimation.as_printed = true;
    }
    match &cli.command {
        Command::Rate { out } => cfg.output.report = out.clone().or(cfg.output.report),
        Command::Sweep { variable, fixed, out } => {
            if let Some(v) = variable {
                cfg.sweep.variable = *v;
            }
            if *fixed {
                cfg.sweep.optimize = false;
            }
            cfg.output.sweep_csv = out.clone().or(cfg.output.sweep_csv.take());
        }
        Command::Optimize { effort, out, trace } => {
            if let Some(e) = effort {
                cfg.effort = *e;
            }
            cfg.output.report = out.clone().or(cfg.output.report.take());
            cfg.output.trace_csv = trace.clone().or(cfg.output.trace_csv.take());
        }
        Command::Simulate { trials, out } => {
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            cfg.output.simulation = out.clone().or(cfg.output.simulation.take());
        }
        Command::ShowConfig => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| match cli.command {
        Command::Rate { .. } => run_rate(&cfg),
        Command::Sweep { .. } => run_sweep(&cfg),
        Command::Optimize { .. } => run_optimize(&cfg),
        Command::Simulate { .. } => run_simulate(&cfg),
        Command::ShowConfig => run_show_config(&cfg),
    });
    match result {
        Ok(s) => ExitCode::from(s as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Error as u8)
        }
    }
}
