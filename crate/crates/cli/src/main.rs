//! `catpulse`: train the pulse network, generate and evaluate pulses,
//! simulate tomography and run the GRAPE/Krotov comparison.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Preset, ReadoutKind};

#[derive(Parser, Debug)]
#[command(name = "catpulse", version, about = "Neural-network control pulses for cavity cat states")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to $CATPULSE_THREADS, then the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; defaults to $CATPULSE_OUT, then `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct TaskArgs {
    /// Comma-separated cat amplitudes.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub alpha: Vec<f64>,
    /// Comma-separated cat phases, rad.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    pub phi: Vec<f64>,
}

impl TaskArgs {
    pub fn tasks(&self) -> Vec<(f64, f64)> {
        self.phi.iter().flat_map(|&p| self.alpha.iter().map(move |&a| (a, p))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    Schrodinger,
    Lindblad,
    Corrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Strategy {
    Optimal,
    Uniform,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the network through the curriculum.
    Train {
        /// Overrides `curriculum.preset` (ignored when stages are listed).
        #[arg(long)]
        preset: Option<Preset>,
        /// Continue from these weights.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Spline coefficients and sampled waveforms for a set of targets.
    Generate {
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        tasks: TaskArgs,
    },
    /// Fidelity of a network pulse or a controls file.
    Evaluate {
        #[arg(long, conflicts_with = "controls", required_unless_present = "controls")]
        weights: Option<PathBuf>,
        /// Piecewise-constant controls CSV spanning the pulse duration.
        #[arg(long)]
        controls: Option<PathBuf>,
        #[command(flatten)]
        tasks: TaskArgs,
        #[arg(long, value_enum, default_value = "corrected")]
        mode: EvalMode,
        /// Cavity levels; by default from the truncation rule for each `α`.
        #[arg(long)]
        n_fock: Option<usize>,
    },
    /// Simulated Wigner tomography of a network-prepared state.
    Tomography {
        #[arg(long, required_unless_present = "replay")]
        weights: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value = "0", allow_negative_numbers = true)]
        phi: f64,
        #[arg(long, value_enum, default_value = "optimal")]
        strategy: Strategy,
        /// Shots; defaults to `tomography.samples`.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum)]
        readout: Option<ReadoutKind>,
        /// Re-estimate from a samples CSV instead of simulating.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Contrast to use with `--replay`.
        #[arg(long, default_value = "1")]
        contrast: f64,
    },
    /// Ground-state heralding probabilities of the repeated Ramsey sequence.
    Heralding,
    /// Expected tomography estimates under measurement imperfections.
    Budget {
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        tasks: TaskArgs,
    },
    /// GRAPE followed by Krotov refinement for one target.
    Grape {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value = "0", allow_negative_numbers = true)]
        phi: f64,
    },
    /// Network against GRAPE/Krotov: fidelities and timing.
    Benchmark {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2")]
        alpha: Vec<f64>,
        #[arg(long, default_value = "0", allow_negative_numbers = true)]
        phi: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.reseed(s);
    }
    let threads = config::resolve_threads(cli.threads)?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    let out = config::resolve_out(cli.out.as_deref(), &cfg);
    let ctx = commands::Context { cfg, out, threads };
    match cli.command {
        Command::Train { preset, resume } => commands::train(ctx, preset, resume),
        Command::Generate { weights, tasks } => commands::generate(ctx, &weights, &tasks),
        Command::Evaluate {
            weights,
            controls,
            tasks,
            mode,
            n_fock,
        } => commands::evaluate(ctx, weights.as_deref(), controls.as_deref(), &tasks, mode, n_fock),
        Command::Tomography {
            weights,
            alpha,
            phi,
            strategy,
            samples,
            readout,
            replay,
            contrast,
        } => commands::tomography(ctx, weights.as_deref(), alpha, phi, strategy, samples, readout, replay.as_deref(), contrast),
        Command::Heralding => commands::heralding(ctx),
        Command::Budget { weights, tasks } => commands::budget(ctx, &weights, &tasks),
        Command::Grape { alpha, phi } => commands::grape(ctx, alpha, phi),
        Command::Benchmark { weights, alpha, phi } => commands::benchmark(ctx, &weights, &alpha, phi),
    }
}
