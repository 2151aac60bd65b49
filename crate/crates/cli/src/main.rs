//! Command-line front end for the description pipeline and its benchmarks.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pictext",
    version,
    about = "Grounded image description pipeline and evaluation metrics",
    after_help = "Exit codes: 0 success; 1 fatal error; 2 finished with per-item failures.",
    term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Describe every image in a manifest through the three-phase pipeline
    Textualize(commands::TextualizeArgs),
    /// Score candidate descriptions against references (BLEU, ROUGE-L, CIDEr-D)
    Evaluate(commands::EvaluateArgs),
    /// Word, sentence, and readability statistics for one text file
    Stats(commands::StatsArgs),
    /// Accuracy of yes/no object-probe answers, per split and averaged
    Pope(commands::PopeArgs),
    /// Cosine similarity between original and generated image embeddings
    D2i(commands::D2iArgs),
    /// Generate a synthetic scene set with replayable backend fixtures
    Fixtures(commands::FixturesArgs),
    /// Summarize records in a pipeline dataset and check their invariants
    Inspect(commands::InspectArgs),
}

fn main() -> ExitCode {
    // Route usage errors through the documented exit contract: clap would
    // exit 2 on its own, but 2 means "finished with per-item failures" here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            err.print().expect("clap error prints");
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Textualize(args) => commands::textualize(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Stats(args) => commands::stats(args),
        Command::Pope(args) => commands::pope(args),
        Command::D2i(args) => commands::d2i(args),
        Command::Fixtures(args) => commands::fixtures(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    match result {
        Ok(code) => code,
        Err(err) if commands::is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
