use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};

use promptmt::error::Result;
use promptmt::mqm::{
    category_counts, load_annotations, system_score, MqmWeights, DEFAULT_FIRST_K,
};

use super::{resolve_lang_pair, resolve_test_set, OutputFormat};
use crate::context::{emit, RunContext};

#[derive(Subcommand)]
pub enum MqmCmd {
    /// System score with accuracy/fluency decomposition.
    Score(ScoreArgs),
    /// Major/minor error counts per category.
    Counts(CountsArgs),
}

#[derive(Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 5.0)]
    pub major_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub minor_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    pub punctuation_weight: f64,
    /// Override for "Non-translation!" errors.
    #[arg(long)]
    pub nontranslation_weight: Option<f64>,
}

impl WeightArgs {
    fn weights(&self) -> MqmWeights {
        MqmWeights {
            major: self.major_weight,
            minor: self.minor_weight,
            minor_punctuation: self.punctuation_weight,
            nontranslation_override: self.nontranslation_weight,
        }
    }
}

#[derive(Args)]
pub struct ScoreArgs {
    /// Annotation JSONL.
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub test_set_name: Option<String>,
    /// Segments evaluated per document.
    #[arg(long, default_value_t = DEFAULT_FIRST_K)]
    pub first_k: usize,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct CountsArgs {
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn run(ctx: &RunContext, cmd: MqmCmd) -> Result<()> {
    match cmd {
        MqmCmd::Score(args) => score(ctx, args),
        MqmCmd::Counts(args) => counts(ctx, args),
    }
}

fn score(ctx: &RunContext, args: ScoreArgs) -> Result<()> {
    let lang_pair = resolve_lang_pair(ctx, None, None);
    let test_set = resolve_test_set(ctx, args.test_set.as_ref(), args.test_set_name.as_deref(), &lang_pair)?;
    let annotations = load_annotations(&args.annotations)?;
    let report = system_score(&annotations, &test_set, args.first_k, &args.weights.weights())?;
    let rendered = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&report)?,
        OutputFormat::Markdown => format!(
            "| MQM | Accuracy | Fluency |\n|---|---|---|\n| {:.2} | {:.2} | {:.2} |\n\n{}",
            report.system_score,
            report.accuracy_score,
            report.fluency_score,
            report.category_counts.to_markdown(),
        ),
    };
    emit(args.output.as_deref(), &rendered)?;
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage(
        "mqm-score",
        &[&args.annotations],
        &outputs,
        Some(format!(
            "system score {:.4} over {} segments",
            report.system_score, report.evaluated_segments
        )),
    )?;
    Ok(())
}

fn counts(ctx: &RunContext, args: CountsArgs) -> Result<()> {
    let annotations = load_annotations(&args.annotations)?;
    let table = category_counts(&annotations)?;
    let rendered = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&table)?,
        OutputFormat::Markdown => table.to_markdown(),
    };
    emit(args.output.as_deref(), &rendered)?;
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage("mqm-counts", &[&args.annotations], &outputs, None)?;
    Ok(())
}
