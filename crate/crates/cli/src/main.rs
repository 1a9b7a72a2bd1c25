//! `epfcal`: configuration-driven backtests of NOT-calibrated ARX forecasts.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};

use crate::commands::RunContext;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "epfcal",
    version,
    about = "Day-ahead price forecasting with change-point calibration windows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated strategies, e.g. `Win(728),Av(NOT_H)`.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    /// Also write timings.json (not byte-reproducible).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rolling backtest: forecasts, scores, DM matrix, masks.
    Backtest,
    /// RMSE of Win(tau) and Win_H(tau) over a range of windows.
    Sweep {
        #[arg(long)]
        tau_min: Option<usize>,
        #[arg(long)]
        tau_max: Option<usize>,
        #[arg(long)]
        tau_step: Option<usize>,
    },
    /// Scores and multivariate DM p-values for existing forecast files.
    DmMatrix {
        /// Directory holding `forecasts_*.csv` (default: `output_dir`).
        #[arg(long, value_name = "DIR")]
        forecasts: Option<PathBuf>,
        /// Norm order of the daily loss, 1 or 2.
        #[arg(long)]
        norm: Option<u8>,
    },
    /// NOT calibration masks for the configured hours.
    MaskReport {
        #[arg(long)]
        tau: Option<usize>,
        /// Also write the detector's solution path for every mask.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Load and validate the data, print a repair summary.
    ValidateData,
}

pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn report(&self) -> (u8, &anyhow::Error, &str) {
        match self {
            Failure::Config(e) => (1, e, "config error"),
            Failure::Data(e) => (2, e, "data error"),
            Failure::Runtime(e) => (3, e, "error"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, e, label) = f.report();
            eprintln!("{label}: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| Failure::Config(anyhow!("--config PATH is required")))?;
    let mut config = RunConfig::load(&path).map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(list) = &cli.strategies {
        config.strategies = list
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    match &cli.command {
        Command::Sweep {
            tau_min,
            tau_max,
            tau_step,
        } => {
            let s = &mut config.sweep;
            s.tau_min = tau_min.unwrap_or(s.tau_min);
            s.tau_max = tau_max.unwrap_or(s.tau_max);
            s.tau_step = tau_step.unwrap_or(s.tau_step);
        }
        Command::DmMatrix { norm: Some(n), .. } => config.report.norm_order = *n,
        _ => {}
    }
    config.validate().map_err(Failure::Config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(e.into()))?;
    let timings = cli.timings || config.report.timings;
    let ctx = RunContext {
        config,
        out: cli.out.clone(),
        timings,
    };
    pool.install(|| match &cli.command {
        Command::Backtest => commands::backtest(&ctx),
        Command::Sweep { .. } => commands::sweep(&ctx),
        Command::DmMatrix { forecasts, .. } => commands::dm_matrix(&ctx, forecasts.as_deref()),
        Command::MaskReport { tau, dump_paths } => commands::mask_report(&ctx, *tau, *dump_paths),
        Command::ValidateData => commands::validate_data(&ctx),
    })
}
