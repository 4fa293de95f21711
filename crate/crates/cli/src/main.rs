mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{CliError, CliResult, RunConfig};
use output::{config_hash, write_json, Manifest};

/// Numerical laboratory for linear (multi)fractional stable sheets:
/// synthesize fields, estimate local times, check existence conditions and
/// verify the analytic bounds behind them.
#[derive(Parser)]
#[command(name = "lmss", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Measure-lattice cell budget; runs fail fast beyond it.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    max_cells: usize,

    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Synthesize a field sample and export it as CSV + meta JSON.
    Simulate,
    /// Estimate a local time from the occupation histogram of one sample.
    Localtime,
    /// Classify the existence condition for local times.
    CheckExistence,
    /// Run the analytic-lemma verification battery.
    VerifyLemmas,
    /// Scan increment-norm ratios against the anisotropy gauge.
    ScanIncrements,
    /// Run a moment- or Hoelder-scaling Monte Carlo probe.
    ScalingProbe,
    /// Compute golden normalizing constants by quadrature.
    CalibrateConstants,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Localtime => "localtime",
            Command::CheckExistence => "check-existence",
            Command::VerifyLemmas => "verify-lemmas",
            Command::ScanIncrements => "scan-increments",
            Command::ScalingProbe => "scaling-probe",
            Command::CalibrateConstants => "calibrate-constants",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config PATH is required"))?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", config_path.display())))?;
    let (mut config, raw) = RunConfig::parse(&text)?;

    let invoked = cli.command.name();
    if config.command != invoked {
        return Err(CliError::config(format!(
            "config is for command {:?} but {invoked:?} was invoked",
            config.command
        )));
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }

    let out_dir = cli
        .output
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::config("no output directory: set output_dir or pass --output"))?;
    std::fs::create_dir_all(&out_dir).map_err(lmss_core::CoreError::Io)?;

    let ctx = commands::Ctx { out_dir: &out_dir, seed: config.seed, max_cells: cli.max_cells };
    let started = Instant::now();
    let outputs = match cli.command {
        Command::Simulate => commands::simulate(&config, &ctx)?,
        Command::Localtime => commands::localtime(&config, &ctx)?,
        Command::CheckExistence => commands::check_existence(&config, &ctx)?,
        Command::VerifyLemmas => commands::verify_lemmas(&config, &ctx)?,
        Command::ScanIncrements => commands::scan_increments(&config, &ctx)?,
        Command::ScalingProbe => commands::scaling_probe(&config, &ctx)?,
        Command::CalibrateConstants => commands::calibrate_constants(&config, &ctx)?,
    };

    let manifest = Manifest {
        command: invoked.to_string(),
        config_hash: config_hash(&raw),
        config: raw,
        seed: config.seed,
        threads: cli.threads,
        max_cells: cli.max_cells,
        crate_version: env!("CARGO_PKG_VERSION"),
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs,
    };
    write_json(&out_dir, "manifest.json", &manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
