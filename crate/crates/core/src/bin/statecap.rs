use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use statecap::io::{run_and_write, ExperimentConfig, RunError, Task};

/// Coding-rate analysis for discrete memoryless channels with state known at
/// both encoder and decoder.
///
/// Every subcommand reads a JSON experiment configuration. Results go to
/// `--out` (or `output.dir` in the configuration) as `<task>.json` plus CSV
/// tables; without an output directory the JSON summary is printed.
/// Exit status: 0 on success, 2 for configuration errors, 3 for compute errors.
#[derive(Parser, Debug)]
#[command(name = "statecap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// ε-capacity and optimistic ε-capacity as generalized inverses of the
    /// cdf of the type-averaged capacity C(T), with a strong-converse verdict.
    FirstOrder(Common),
    /// Second-order coefficient Λ(ε, β) of log M*(ε) = nC_ε + Λ n^β + o(n^β)
    /// from the K-functional, checked against the model closed forms
    /// (mixed, i.i.d., block i.i.d., Markov and alternating states).
    SecondOrder(Common),
    /// Finite-n bounds on log M*(ε): Feinstein achievability, the
    /// information-spectrum converse over conditional types, the explicit
    /// Gaussian direct bound, and optionally a random-coding ML simulation.
    Bounds(Common),
    /// Normal-approximation gaps: replacing V(T) by V(π), then C(T) by its
    /// Gaussian surrogate, with fitted log-log decay slopes.
    Audit(Common),
    /// Per-state capacity, dispersion and third moment, the Berry–Esseen
    /// constant, and the state-variance terms V* or V** of the process.
    Constants(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed for every Monte Carlo step; overrides `parameters.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(task: Task, args: Common) -> Result<(), RunError> {
    let config = ExperimentConfig::load(&args.config)?.resolve(Some(task), args.seed, args.out)?;
    let (output, written) = run_and_write(&config)?;
    if written.is_empty() {
        print!("{}", output.json());
    } else {
        for path in written {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::FirstOrder(a) => (Task::FirstOrder, a),
        Command::SecondOrder(a) => (Task::SecondOrder, a),
        Command::Bounds(a) => (Task::Bounds, a),
        Command::Audit(a) => (Task::Audit, a),
        Command::Constants(a) => (Task::Constants, a),
    };
    match execute(task, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("statecap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
