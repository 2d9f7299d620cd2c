use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tls_locator::stages::{exit_code, run_stage, StageContext};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Stage {
    SimulateFields,
    Synth,
    Fit,
    Localize,
    ErrorSweep,
    Score,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::SimulateFields => "simulate-fields",
            Stage::Synth => "synth",
            Stage::Fit => "fit",
            Stage::Localize => "localize",
            Stage::ErrorSweep => "error-sweep",
            Stage::Score => "score",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
}

/// Localize two-level-system defects at a superconducting film edge.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; also the default location of stage inputs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TLS_LOCATOR_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("TLS_LOCATOR_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let ctx = StageContext {
        config_path: cli.config,
        out: cli.out,
        seed: cli.seed,
        preset: cli.preset.map(|_| "paper".to_string()),
    };
    match run_stage(cli.stage.name(), &ctx) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
