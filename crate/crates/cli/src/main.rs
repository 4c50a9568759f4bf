//! `afdm` — BER sweeps and self-checks for the AFDM link simulator.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use afdm::harness::{self, parse_config, presets, selftest, ExperimentConfig, RunOptions};
use afdm::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "afdm", version, about = "AFDM link-level BER simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// MP damping sweep at 16, 18 and 20 dB.
    Fig4 {
        #[command(flatten)]
        run: RunArgs,
    },
    /// MP with four versus five paths.
    Fig5 {
        #[command(flatten)]
        run: RunArgs,
    },
    /// MP, MMSE and MRC on four-path channels.
    Fig6 {
        #[command(flatten)]
        run: RunArgs,
    },
    /// MP for N = 32, 64, 128, 256.
    Fig7 {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Cross-check transforms, channel models and detectors.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// key=value config file; required for `sweep`.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Frames per sweep point.
    #[arg(long, value_name = "INT")]
    frames: Option<usize>,
    #[arg(long, value_name = "INT", default_value_t = 1)]
    workers: usize,
    /// CSV output path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-frame diagnostics on stderr.
    #[arg(long)]
    verbose: bool,
    /// Record wall-clock time per point instead of 0.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn options(&self) -> Result<RunOptions, Error> {
        if self.workers == 0 {
            return Err(Error::Validation("--workers must be at least 1".into()));
        }
        Ok(RunOptions { workers: self.workers, verbose: self.verbose })
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(frames) = self.frames {
            cfg.frames = frames;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        cfg.timing |= self.timing;
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn sweep(run: &RunArgs) -> Result<(), Error> {
    let path = run
        .config
        .as_ref()
        .ok_or_else(|| Error::Validation("sweep needs --config PATH".into()))?;
    let mut cfg = load_config(path)?;
    run.apply(&mut cfg);
    let records = harness::run_sweep(&cfg, run.options()?)?;
    eprintln!("wrote {} points to {}", records.len(), cfg.output.display());
    Ok(())
}

fn preset(name: &str, run: &RunArgs) -> Result<(), Error> {
    if run.config.is_some() {
        return Err(Error::Validation(format!("{name} does not take --config")));
    }
    let out = run.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    let mut cfgs = presets::by_name(name, 10_000, 1, out.clone())
        .ok_or_else(|| Error::Validation(format!("unknown preset {name}")))?;
    for cfg in &mut cfgs {
        run.apply(cfg);
    }
    let records = harness::run_batch(&cfgs, &out, run.options()?)?;
    eprintln!("wrote {} points to {}", records.len(), out.display());
    Ok(())
}

fn run_selftest(seed: u64) -> Result<bool, Error> {
    let mut ok = true;
    for check in selftest::run_selftest(seed)? {
        println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
        ok &= check.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep { run } => sweep(run),
        Command::Fig4 { run } => preset("fig4", run),
        Command::Fig5 { run } => preset("fig5", run),
        Command::Fig6 { run } => preset("fig6", run),
        Command::Fig7 { run } => preset("fig7", run),
        Command::Selftest { seed } => match run_selftest(*seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_RUNTIME),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
