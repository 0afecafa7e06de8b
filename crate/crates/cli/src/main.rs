//! `gbs`: sample, enumerate and validate photon-number-resolving Gaussian
//! boson sampling experiments from JSON configs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gbs_core::exec::with_threads;
use gbs_core::{GbsError, Result};

use crate::config::{ExperimentConfig, ModelKind, Pipeline};

#[derive(Parser)]
#[command(name = "gbs", version, about)]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the config model list with a single model.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Replaces the noise grid with a single level.
    #[arg(long)]
    eta: Option<f64>,
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.sampling.seed = seed;
        }
        if let Some(model) = self.model {
            cfg.models = vec![model];
        }
        if let Some(eta) = self.eta {
            cfg.noise_grid = vec![eta];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a Haar-random interferometer as JSON.
    GenerateUnitary {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw sample files for every configured model and noise level.
    Sample {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        unitary: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip the bona fide box and the training set.
        #[arg(long)]
        test_only: bool,
    },
    /// Enumerate probability tables and their structure statistics.
    Enumerate {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        unitary: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Extra output binning, e.g. "1,2|3,4|5".
        #[arg(long)]
        bins: Option<String>,
    },
    /// Validate test samples against bona fide samples.
    Validate {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        bona: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        test: Vec<PathBuf>,
        /// Training samples; defaults to the head of the bona fide file.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Output binning applied to every file, e.g. "1,2|3,4|5".
        #[arg(long)]
        bins: Option<String>,
        #[arg(long, value_enum)]
        pipeline: Option<Pipeline>,
    },
    /// Merge result summaries into one CSV.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateUnitary { m, seed, out } => commands::generate_unitary(m, seed, &out),
        Command::Sample { o, unitary, out, test_only } => {
            let cfg = o.load()?;
            let itf = commands::load_unitary(&unitary)?;
            commands::sample(&cfg, &itf, &out, test_only).map(drop)
        }
        Command::Enumerate { o, unitary, out, bins } => {
            let cfg = o.load()?;
            let itf = commands::load_unitary(&unitary)?;
            commands::enumerate(&cfg, &itf, &out, bins.as_deref()).map(drop)
        }
        Command::Validate { o, bona, test, train, out, bins, pipeline } => {
            let cfg = o.load()?;
            let args = commands::ValidateArgs {
                bona: &bona,
                tests: &test,
                train: train.as_deref(),
                out: &out,
                bins: bins.as_deref(),
                pipeline,
            };
            commands::validate(&cfg, args).map(drop)
        }
        Command::Report { inputs, out } => commands::report(&inputs, &out),
    }
}

/// 2 parameter/input, 3 resource limit, 4 numerical degeneracy, 5 I/O.
fn exit_code(e: &GbsError) -> u8 {
    match e {
        GbsError::InvalidSpec(_)
        | GbsError::InvalidInput(_)
        | GbsError::InvalidParameter(_)
        | GbsError::InvalidState(_)
        | GbsError::InvalidModel(_) => 2,
        GbsError::ResourceLimit(_) => 3,
        GbsError::NumericalDegeneracy(_) | GbsError::SamplingDegeneracy(_) | GbsError::UndefinedRatio(_) => 4,
        GbsError::Io(_) | GbsError::Format(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match with_threads(threads, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
