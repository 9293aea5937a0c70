use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};

use promptmt::error::{Error, Result};
use promptmt::evaluation::{
    corpus_score, diff_histogram, ingest_segment_scores, select_median_run, system_grid,
    variance_report, variance_to_markdown, ScoredRun,
};

use super::OutputFormat;
use crate::context::{emit, RunContext};

#[derive(Subcommand)]
pub enum EvalCmd {
    /// Attach a per-segment score file to a run.
    Ingest(IngestArgs),
    /// Pick the run with the median corpus score.
    Median(MedianArgs),
    /// Histogram of per-segment score differences between two runs.
    Hist(HistArgs),
    /// Min/avg/max/range of corpus scores across runs.
    Variance(VarianceArgs),
    /// System-by-metric grid of corpus scores.
    Grid(GridArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long, value_name = "FILE")]
    pub run: PathBuf,
    #[arg(long)]
    pub metric: String,
    /// Score file; defaults to the config's entry for this metric.
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    /// Destination; defaults to rewriting the run file in place.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct MedianArgs {
    /// Run JSON files; the count must be odd.
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub metric: String,
    /// Write the selected run JSON here.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct HistArgs {
    #[arg(long, value_name = "FILE")]
    pub run_a: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub run_b: PathBuf,
    #[arg(long)]
    pub metric: String,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct VarianceArgs {
    #[arg(long, value_name = "FILE", num_args = 2.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridArgs {
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub metrics: Vec<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn run(ctx: &RunContext, cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Ingest(args) => ingest(ctx, args),
        EvalCmd::Median(args) => median(ctx, args),
        EvalCmd::Hist(args) => hist(ctx, args),
        EvalCmd::Variance(args) => variance(ctx, args),
        EvalCmd::Grid(args) => grid(ctx, args),
    }
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<ScoredRun>> {
    paths.iter().map(ScoredRun::load).collect()
}

fn ingest(ctx: &RunContext, args: IngestArgs) -> Result<()> {
    let scores_path = args
        .scores
        .clone()
        .or_else(|| ctx.config.metrics.get(&args.metric).cloned())
        .ok_or_else(|| {
            Error::Config(format!(
                "no score file given and the config has no entry for metric {:?}",
                args.metric
            ))
        })?;
    let mut run = ScoredRun::load(&args.run)?;
    let warnings = ingest_segment_scores(&mut run, &args.metric, &scores_path)?;
    for warning in &warnings {
        ctx.log("eval-ingest", "warn", &warning.message);
    }
    let output = args.output.clone().unwrap_or_else(|| args.run.clone());
    run.save(&output)?;
    ctx.record_stage(
        "eval-ingest",
        &[&args.run, &scores_path],
        &[&output],
        Some(format!("metric {}", args.metric)),
    )?;
    Ok(())
}

fn median(ctx: &RunContext, args: MedianArgs) -> Result<()> {
    let runs = load_runs(&args.runs)?;
    let selected = select_median_run(&runs, &args.metric)?;
    let summary = serde_json::json!({
        "selected_run_id": selected.run_id,
        "metric": args.metric,
        "corpus_score": corpus_score(selected, &args.metric)?,
        "runs": runs
            .iter()
            .map(|r| Ok((r.run_id.clone(), corpus_score(r, &args.metric)?)))
            .collect::<Result<std::collections::BTreeMap<_, _>>>()?,
    });
    if let Some(output) = &args.output {
        selected.save(output)?;
    }
    crate::context::print_data(&serde_json::to_string_pretty(&summary)?);
    let inputs: Vec<&Path> = args.runs.iter().map(|p| p.as_path()).collect();
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage(
        "eval-median",
        &inputs,
        &outputs,
        Some(format!("selected run {}", selected.run_id)),
    )?;
    Ok(())
}

fn hist(ctx: &RunContext, args: HistArgs) -> Result<()> {
    let run_a = ScoredRun::load(&args.run_a)?;
    let run_b = ScoredRun::load(&args.run_b)?;
    let histogram = diff_histogram(&run_a, &run_b, &args.metric, args.bin_width)?;
    let payload = serde_json::json!({
        "metric": args.metric,
        "bin_width": histogram.bin_width,
        "bins": histogram
            .bins
            .iter()
            .map(|(&bin, &count)| (format!("{}", histogram.lower_edge(bin)), count))
            .collect::<std::collections::BTreeMap<_, _>>(),
        "total": histogram.total,
        "exceeding_count": histogram.exceeding_count,
        "summary": histogram.summary_line(),
    });
    emit(args.output.as_deref(), &serde_json::to_string_pretty(&payload)?)?;
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage("eval-hist", &[&args.run_a, &args.run_b], &outputs, None)?;
    Ok(())
}

fn grid(ctx: &RunContext, args: GridArgs) -> Result<()> {
    let runs = load_runs(&args.runs)?;
    let grid = system_grid(&runs, &args.metrics)?;
    let rendered = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&grid)?,
        OutputFormat::Markdown => grid.to_markdown(),
    };
    emit(args.output.as_deref(), &rendered)?;
    let inputs: Vec<&Path> = args.runs.iter().map(|p| p.as_path()).collect();
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage("eval-grid", &inputs, &outputs, None)?;
    Ok(())
}

fn variance(ctx: &RunContext, args: VarianceArgs) -> Result<()> {
    let runs = load_runs(&args.runs)?;
    let report = variance_report(&runs)?;
    let rendered = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&report)?,
        OutputFormat::Markdown => variance_to_markdown(&report),
    };
    emit(args.output.as_deref(), &rendered)?;
    let inputs: Vec<&Path> = args.runs.iter().map(|p| p.as_path()).collect();
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage("eval-variance", &inputs, &outputs, None)?;
    Ok(())
}
