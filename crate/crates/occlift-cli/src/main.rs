//! occlift: occlusion-robust 2D-to-3D pose lifting toolkit.

use clap::{Parser, Subcommand};
use occlift_cli::commands;
use occlift_cli::CliError;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "occlift",
    version,
    about = "Occlusion-robust 2D-to-3D human pose lifting: synthetic data, training, evaluation, and ablations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motion-capture dataset.
    Synth(commands::synth::SynthArgs),
    /// Generate the structured occlusion mask set.
    Masks(commands::masks::MasksArgs),
    /// Train the lifting and refinement networks.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint: MPJPE, NMPJPE, PMPJPE, 3DPCK.
    Eval(commands::eval::EvalArgs),
    /// Sweep one parameter over values and seeds.
    Ablate(commands::ablate::AblateArgs),
    /// Triangulate DLT pseudo-labels for unlabeled frames.
    Triangulate(commands::triangulate::TriangulateArgs),
    /// Recount dataset visibility and split statistics.
    Stats(commands::stats::StatsArgs),
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Masks(args) => commands::masks::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Ablate(args) => commands::ablate::run(args),
        Command::Triangulate(args) => commands::triangulate::run(args),
        Command::Stats(args) => commands::stats::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("{}", e.to_json_line());
        std::process::exit(e.kind.exit_code());
    }
}
