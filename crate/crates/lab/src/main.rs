use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sawtooth_core::analysis::{DGrid, FitModel};
use sawtooth_core::trainer::ToySequencing;
use sawtooth_lab::commands::{self, FitArgs, NShapeArgs, OverlapArgs, RunArgs, ToyArgs};

/// Reproduce sawtooth-shaped training loss curves on a quadratic testbed.
#[derive(Parser)]
#[command(name = "sawtooth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a spec file (or a bundled spec by name) and write its artifacts.
    Run {
        /// Spec path, or one of: paper_fig11a, paper_fig12_beta2_sweep.
        spec: String,
        /// Output directory (overrides the experiment file's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent sweep points (overrides the experiment file's `workers`).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a per-step model to one epoch of a trace.
    Fit {
        /// Trace CSV written by `run`.
        trace: PathBuf,
        /// g_norm | m_norm | v_norm | dot_m | dot_dtheta.
        #[arg(long, value_parser = parse_model)]
        model: FitModel,
        #[arg(long, default_value_t = 0.9)]
        beta1: f64,
        #[arg(long, default_value_t = 0.999)]
        beta2: f64,
        /// Epoch to fit (default: the last one in the file).
        #[arg(long)]
        epoch: Option<usize>,
        /// Fit only in-epoch steps up to this one.
        #[arg(long)]
        max_step: Option<usize>,
        /// Output directory (default: fit-<model> next to the trace).
        #[arg(long)]
        out: Option<PathBuf>,
        /// First d of the dot_dtheta grid.
        #[arg(long, default_value_t = 0.0)]
        d_start: f64,
        /// Last d of the dot_dtheta grid.
        #[arg(long, default_value_t = 100.0)]
        d_stop: f64,
        /// Spacing of the dot_dtheta grid.
        #[arg(long, default_value_t = 0.5)]
        d_step: f64,
    },
    /// Two-batch toy problem under momentum SGD.
    Toy {
        /// fixed | reversed.
        #[arg(value_parser = parse_sequencing)]
        sequencing: ToySequencing,
        /// Momentum coefficient.
        beta1: f64,
        #[arg(long, default_value_t = commands::TOY_DEFAULT_LR)]
        lr: f64,
        #[arg(long, default_value_t = commands::TOY_DEFAULT_EPOCHS)]
        epochs: usize,
        /// CSV file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cosine similarity between a batch gradient and the update as beta2 sweeps [0, 1].
    Nshape {
        /// Vector file with grad_l_b, m_hat, v_prev, g_squared lists (default: built-in vectors).
        vectors: Option<PathBuf>,
        /// Grid intervals.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// CSV file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected samples shared by consecutive epochs' boundary batches.
    Overlap {
        /// Samples per epoch.
        n: usize,
        /// Batch size.
        b: usize,
        /// Also simulate this many epoch boundaries.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_model(s: &str) -> Result<FitModel, String> {
    s.parse().map_err(|e: sawtooth_core::Error| e.to_string())
}

fn parse_sequencing(s: &str) -> Result<ToySequencing, String> {
    s.parse().map_err(|e: sawtooth_core::Error| e.to_string())
}

fn dispatch(command: Command, out: &mut dyn Write) -> sawtooth_lab::Result<()> {
    match command {
        Command::Run { spec, out: dir, workers } => commands::cmd_run(&RunArgs { spec, out: dir, workers }, out),
        Command::Fit {
            trace,
            model,
            beta1,
            beta2,
            epoch,
            max_step,
            out: dir,
            d_start,
            d_stop,
            d_step,
        } => {
            let args = FitArgs {
                trace,
                model,
                beta1,
                beta2,
                epoch,
                max_step,
                out: dir,
                grid: DGrid {
                    start: d_start,
                    stop: d_stop,
                    step: d_step,
                },
            };
            commands::cmd_fit(&args, out).map(drop)
        }
        Command::Toy {
            sequencing,
            beta1,
            lr,
            epochs,
            out: file,
        } => commands::cmd_toy(&ToyArgs { sequencing, beta1, lr, epochs, out: file }, out),
        Command::Nshape { vectors, steps, out: file } => commands::cmd_nshape(&NShapeArgs { vectors, steps, out: file }, out),
        Command::Overlap { n, b, trials, seed } => commands::cmd_overlap(&OverlapArgs { n, b, trials, seed }, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(cli.command, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            drop(lock);
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
