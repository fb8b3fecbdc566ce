//! `compass`: runs compass experiments from a TOML config and writes CSV
//! tables with a provenance header.
//!
//! Exit status: 0 success, 2 configuration or usage error, 3 computation
//! failure, 4 output I/O failure.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use compass_core::config::ExperimentConfig;
use compass_core::experiments::{self, stamp, RunContext, RunOutput};
use compass_core::parallel::with_jobs;
use compass_core::CompassError;

const JOBS_ENV: &str = "COMPASS_JOBS";

#[derive(Debug, Parser)]
#[command(name = "compass", version, about = "Radical-pair compass experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = JOBS_ENV, value_name = "N")]
    jobs: Option<usize>,

    /// Optimizer seed (overrides `run.seed`).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Theta grid size (overrides `run.grid`).
    #[arg(long, global = true, value_name = "N")]
    grid: Option<usize>,

    /// Scan theta over [0, pi] instead of [0, pi/2].
    #[arg(long, global = true)]
    full_theta: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Singlet yield over the theta grid.
    Yield,
    /// Sensitivity against coupling/field ratio, contour and lifetime tables.
    Fig1,
    /// Control-field optimization with yield and trace comparison.
    Fig2,
    /// Sensitivity against dephasing rate.
    #[command(alias = "dephasing-scan")]
    Fig3,
    /// Hyperfine or control optimization with a reusable snippet.
    Optimize,
    /// Sensitivity over `run.sweep` values.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Yield => "yield",
            Command::Fig1 => "fig1",
            Command::Fig2 => "fig2",
            Command::Fig3 => "fig3",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
        }
    }

    fn run(self, cfg: &ExperimentConfig) -> compass_core::Result<RunOutput> {
        match self {
            Command::Yield => experiments::cmd_yield(cfg),
            Command::Fig1 => experiments::cmd_fig1(cfg),
            Command::Fig2 => experiments::cmd_fig2(cfg),
            Command::Fig3 => experiments::cmd_fig3(cfg),
            Command::Optimize => experiments::cmd_optimize(cfg),
            Command::Sweep => experiments::cmd_sweep(cfg),
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Compute(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Compute(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl From<CompassError> for Failure {
    fn from(e: CompassError) -> Self {
        match e {
            CompassError::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Compute(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(grid) = cli.grid {
        cfg.run.grid = grid;
    }
    if cli.full_theta {
        cfg.run.full_theta = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_outputs(out: &RunOutput, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, Failure> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut written = Vec::new();
    for (name, table) in &out.tables {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        table
            .write_csv_with(BufWriter::new(file), cfg.output.precision)
            .map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    for (name, text) in &out.texts {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    let path = dir.join("resolved_config.toml");
    fs::write(&path, cfg.to_toml()).map_err(|e| io_err(&path, e))?;
    written.push(path);
    Ok(written)
}

fn run(cli: &Cli, jobs_source: &str) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let start = Instant::now();
    let mut out = with_jobs(cli.jobs, || cli.command.run(&cfg))?;
    let ctx = RunContext {
        command: cli.command.name().to_string(),
        config: cfg.clone(),
        jobs: cli.jobs,
        jobs_source: jobs_source.to_string(),
    };
    stamp(&mut out, &ctx, start.elapsed().as_secs_f64());
    let written = write_outputs(&out, &cfg)?;
    for (k, v) in &out.summary {
        println!("{k} = {v}");
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let jobs_source = match matches.value_source("jobs") {
        Some(ValueSource::CommandLine) => "flag".to_string(),
        Some(ValueSource::EnvVariable) => format!("env {JOBS_ENV}"),
        _ => "default".to_string(),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(&cli, &jobs_source) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
