//! `camab`: experiments with causally abstracted bandits.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a theorem validator
//! fails.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camab_core::harness::{
    cmd_measure, cmd_run, cmd_simulate, cmd_sweep, cmd_verify, load_config, ExperimentConfig,
};
use camab_core::{CamabError, Stream};

#[derive(Parser)]
#[command(name = "camab", version, about = "Causally abstracted multi-armed bandit experiments")]
struct Cli {
    /// TOML configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit the `# generated_unix=` header line.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One AT-UCB or UCB run, step by step, plus a summary file.
    Run,
    /// UCB minus AT-UCB regret over a grid of thresholds, plus an aggregate file.
    Sweep,
    /// Estimate the RD and IC errors of the configured abstraction.
    Measure,
    /// Run the numeric theorem checks.
    Verify,
    /// Dump one raw SIRS trajectory.
    Simulate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Measure => "measure",
            Command::Verify => "verify",
            Command::Simulate => "simulate",
        }
    }
}

/// `dir/stem.csv` -> `dir/stem.<suffix>.csv`.
fn companion(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

fn execute(cli: &Cli) -> Result<ExitCode, CamabError> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name())));
    let stamp = !cli.no_timestamp;
    let stream = Stream::new(config.seed);

    match cli.command {
        Command::Run => {
            let record = cmd_run(&config, stream)?;
            record.steps_table()?.write(&out, stamp)?;
            record.summary_table().write(&companion(&out, "summary"), stamp)?;
            log::info!("cumulative regret {}", record.cumulative_regret);
        }
        Command::Sweep => {
            let result = cmd_sweep(&config, stream)?;
            result.rows_table().write(&out, stamp)?;
            result.aggregate_table().write(&companion(&out, "aggregate"), stamp)?;
        }
        Command::Measure => cmd_measure(&config, stream)?.table().write(&out, stamp)?,
        Command::Verify => {
            let report = cmd_verify(&config, stream)?;
            report.table().write(&out, stamp)?;
            if !report.passed() {
                eprintln!("{} theorem check(s) failed; see {}", report.failures(), out.display());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Simulate => cmd_simulate(&config, stream)?.table().write(&out, stamp)?,
    }
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
