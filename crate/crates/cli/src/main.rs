//! Pipeline driver: each subcommand reads and writes the JSONL/JSON formats
//! of its stage and appends to the run manifest. Stdout carries data only;
//! diagnostics go to the log file and stderr.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.

mod commands;
mod config;
mod context;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use context::RunContext;
use promptmt::error::Error;

#[derive(Parser)]
#[command(name = "promptmt", version, about = "Few-shot translation experiment pipeline")]
struct Cli {
    /// Experiment config JSON; flags override config values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for artifacts, the run manifest, and the log.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Run manifest path (default: `<output-dir>/manifest.json`).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,

    /// JSONL log path (default: `<output-dir>/log.jsonl`).
    #[arg(long, global = true, value_name = "FILE")]
    log_file: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect and filter prompt pools.
    #[command(subcommand)]
    Pool(commands::pool::PoolCmd),
    /// Choose n-shot examples for every test segment.
    Select(commands::pipeline::SelectArgs),
    /// Render prompts from selections.
    #[command(subcommand)]
    Prompt(commands::pipeline::PromptCmd),
    /// Generate translations through a backend.
    Translate(commands::pipeline::TranslateArgs),
    /// Attach metric scores and aggregate runs.
    #[command(subcommand)]
    Eval(commands::eval::EvalCmd),
    /// Score MQM annotation sets.
    #[command(subcommand)]
    Mqm(commands::mqm::MqmCmd),
    /// Train/test overlap auditing.
    #[command(subcommand)]
    Overlap(commands::overlap::OverlapCmd),
    /// Permutation significance testing.
    #[command(subcommand)]
    Sig(commands::sig::SigCmd),
}

fn run(cli: Cli) -> promptmt::Result<()> {
    let ctx = RunContext::new(
        cli.config.as_deref(),
        cli.output_dir.as_deref(),
        cli.manifest.as_deref(),
        cli.log_file.as_deref(),
    )?;
    match cli.command {
        Command::Pool(cmd) => commands::pool::run(&ctx, cmd),
        Command::Select(args) => commands::pipeline::run_select(&ctx, args),
        Command::Prompt(cmd) => commands::pipeline::run_prompt(&ctx, cmd),
        Command::Translate(args) => commands::pipeline::run_translate(&ctx, args),
        Command::Eval(cmd) => commands::eval::run(&ctx, cmd),
        Command::Mqm(cmd) => commands::mqm::run(&ctx, cmd),
        Command::Overlap(cmd) => commands::overlap::run(&ctx, cmd),
        Command::Sig(cmd) => commands::sig::run(&ctx, cmd),
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_backend_error() {
        3
    } else if err.is_data_error() || matches!(err, Error::Io { .. }) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
