//! Experiment driver: configuration, subcommands, output files, seeds, and
//! parallel ensemble execution.
//!
//! Every output artifact is a pure function of (config bytes, seed, code
//! version); thread count only changes wall time. Exit codes: 0 success,
//! 1 configuration errors, 2 numeric gate failures in `verify`, 3 resource
//! limits.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "lorentz", version, about = "Lorentz gas simulation and verification driver")]
struct Cli {
    /// Experiment configuration file (TOML); builtin defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override (default: config, then $LORENTZ_OUT_DIR,
    /// then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread override; 0 = all cores. Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Tabulate the collision kernel and its moments on a grid.
    KernelEval,
    /// Simulate flight-process ensembles and their statistics.
    Chain,
    /// Simulate finite-radius billiard ensembles and compare with the
    /// limit kernel.
    Billiard,
    /// Normalized-endpoint Gaussianity run.
    Clt,
    /// Spectral-gap estimate of the transition operator.
    Spectral,
    /// Run the full acceptance gate suite.
    Verify {
        /// `full` or `quick` (overrides the config).
        #[arg(long)]
        scale: Option<String>,
    },
}

pub enum CliError {
    Config(String),
    Resource(String),
    GateFailure,
    Runtime(String),
}

impl From<lorentz_core::Error> for CliError {
    fn from(e: lorentz_core::Error) -> Self {
        match e {
            lorentz_core::Error::Resource(m) => CliError::Resource(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::GateFailure) => {
            eprintln!("one or more acceptance gates failed");
            ExitCode::from(2)
        }
        Err(CliError::Resource(msg)) => {
            eprintln!("resource limit: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (mut cfg, cfg_bytes) =
        config::load(cli.config.as_deref()).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.run.threads = threads;
    }
    let out_dir = cli
        .out
        .or_else(|| cfg.run.out_dir.clone())
        .or_else(|| std::env::var_os("LORENTZ_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    // validate before creating anything
    let subcommand = match &cli.cmd {
        Cmd::KernelEval => "kernel-eval",
        Cmd::Chain => "chain",
        Cmd::Billiard => "billiard",
        Cmd::Clt => "clt",
        Cmd::Spectral => "spectral",
        Cmd::Verify { .. } => "verify",
    };
    commands::validate(subcommand, &cfg, cli.config.as_deref()).map_err(CliError::Config)?;

    lorentz_core::rng::self_test(cfg.run.seed)
        .map_err(|e| CliError::Runtime(format!("random stream self-test failed: {e}")))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;

    let config_sha = hex_digest(&cfg_bytes);
    let ctx = commands::Ctx {
        cfg: &cfg,
        cfg_path: cli.config.as_deref(),
        seed: cfg.run.seed,
        out: out_dir,
        config_sha,
        subcommand,
    };

    pool.install(|| match &cli.cmd {
        Cmd::KernelEval => commands::kernel_eval(&ctx),
        Cmd::Chain => commands::chain(&ctx),
        Cmd::Billiard => commands::billiard(&ctx),
        Cmd::Clt => commands::clt(&ctx),
        Cmd::Spectral => commands::spectral(&ctx),
        Cmd::Verify { scale } => commands::verify(&ctx, scale.as_deref()),
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
