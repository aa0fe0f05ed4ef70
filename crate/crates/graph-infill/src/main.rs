mod commands;
mod config;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
/// failure.
fn exit_code_for(err: &amgcl::Error) -> i32 {
    use amgcl::Error::*;
    match err {
        Config(_) | Invalid(_) => 1,
        Parse { .. } | Io { .. } | EdgeOutOfRange { .. } | ShapeMismatch { .. } => 2,
        NonFiniteLoss { .. } | SingularSystem { .. } => 3,
    }
}

#[derive(Parser)]
#[command(
    name = "graph-infill",
    about = "Impute missing node attributes on graphs and evaluate the results",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run feature precoding alone and write the imputed matrix plus an
    /// energy trace.
    Precode(config::CommonArgs),
    /// Full training pipeline: precode, train, evaluate, write artifacts.
    Train(config::CommonArgs),
    /// Recompute metrics from stored artifacts without retraining.
    Eval(config::EvalArgs),
    /// Per-epoch wall-time scaling on synthetic graphs.
    Bench(config::BenchArgs),
    /// Fast internal consistency checks (gradients, oracles, EMA).
    Selfcheck,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Precode(args) => config::resolve(args).and_then(commands::cmd_precode),
        Command::Train(args) => config::resolve(args).and_then(commands::cmd_train),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Bench(args) => commands::cmd_bench(args),
        Command::Selfcheck => commands::cmd_selfcheck(),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err}");
        std::process::exit(exit_code_for(&err));
    }
}
