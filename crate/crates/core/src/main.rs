//! `vru-benefit` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vru_benefit::pipeline::{
    run_assess, run_extrapolate, run_generate, run_report, run_sensitivity, run_simulate,
    PipelineError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "vru-benefit",
    version,
    about = "Prospective safety-benefit assessment of emergency braking/steering systems for cyclists and pedestrians"
)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight of one test result relative to one simulated crash.
    #[arg(long, global = true)]
    w: Option<f64>,
    /// Output directory (inputs default into it as well).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic crashes, the bundled test fixture and person data.
    Generate,
    /// Re-simulate all crashes under the configured algorithms.
    Simulate,
    /// Run the full assessment chain and write all model tables.
    Assess,
    /// Build extrapolation trees and scale reductions to the target region.
    Extrapolate,
    /// Sweep weight/IRC/statistical-mode variants around the reference run.
    Sensitivity,
    /// Print a plain-text summary of a completed run.
    Report,
}

fn build_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(PipelineError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.w {
        cfg.w = w;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate().map_err(PipelineError::Config)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Generate => {
            let out = run_generate(&cfg)?;
            eprintln!(
                "generated {} crashes, {} tests, {} + {} persons -> {}",
                out.n_crashes,
                out.n_tests,
                out.n_persons_indepth,
                out.n_persons_target,
                cfg.out_dir.display()
            );
        }
        Command::Simulate => {
            let out = run_simulate(&cfg)?;
            eprintln!(
                "simulated {} outcomes -> {}",
                out.n_outcomes,
                cfg.out_dir.display()
            );
        }
        Command::Assess => {
            let out = run_assess(&cfg)?;
            for note in &out.assessment.notes {
                eprintln!("note: {note}");
            }
            eprintln!(
                "assessed {} benefit rows -> {}",
                out.assessment.benefits.len(),
                cfg.out_dir.display()
            );
        }
        Command::Extrapolate => {
            let out = run_extrapolate(&cfg)?;
            eprintln!(
                "extrapolated {} rows -> {}",
                out.rows.len(),
                cfg.out_dir.display()
            );
        }
        Command::Sensitivity => {
            let out = run_sensitivity(&cfg)?;
            eprintln!(
                "sensitivity sweep over {} variants -> {}",
                out.variants.len(),
                cfg.out_dir.display()
            );
        }
        Command::Report => {
            let text = run_report(&cfg)?;
            print!("{text}");
        }
    }
    Ok(())
}

/// Worker-count environment variable. Parallelism never affects results;
/// this only tunes throughput.
const WORKERS_ENV: &str = "VRU_BENEFIT_WORKERS";

fn main() -> ExitCode {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("error: {WORKERS_ENV}: {e}");
                    return ExitCode::from(4);
                }
            }
            _ => {
                eprintln!("error: {WORKERS_ENV} must be a positive integer, got `{raw}`");
                return ExitCode::from(4);
            }
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
