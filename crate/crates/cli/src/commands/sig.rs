use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};

use promptmt::error::Result;
use promptmt::evaluation::ScoredRun;
use promptmt::stats::{pairwise_matrix, perm_both_test, Direction, Sidedness, SignificanceConfig};

use super::OutputFormat;
use crate::context::{emit, RunContext};

#[derive(Subcommand)]
pub enum SigCmd {
    /// PERM-BOTH test between two runs.
    Test(TestArgs),
    /// Pairwise p-value matrix across systems.
    Matrix(MatrixArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgSidedness {
    #[value(alias = "one_sided")]
    OneSided,
    #[value(alias = "two_sided")]
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgDirection {
    #[value(alias = "higher_better")]
    HigherBetter,
    #[value(alias = "lower_better")]
    LowerBetter,
}

#[derive(Args)]
pub struct StatArgs {
    #[arg(long)]
    pub metric: String,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "one-sided")]
    pub sidedness: ArgSidedness,
    #[arg(long, value_enum, default_value = "higher-better")]
    pub direction: ArgDirection,
}

impl StatArgs {
    fn config(&self) -> SignificanceConfig {
        SignificanceConfig {
            num_permutations: self.permutations,
            seed: self.seed,
            alpha: self.alpha,
            sidedness: match self.sidedness {
                ArgSidedness::OneSided => Sidedness::OneSided,
                ArgSidedness::TwoSided => Sidedness::TwoSided,
            },
            direction: match self.direction {
                ArgDirection::HigherBetter => Direction::HigherBetter,
                ArgDirection::LowerBetter => Direction::LowerBetter,
            },
        }
    }
}

#[derive(Args)]
pub struct TestArgs {
    #[arg(long, value_name = "FILE")]
    pub run_a: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub run_b: PathBuf,
    #[command(flatten)]
    pub stats: StatArgs,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct MatrixArgs {
    #[arg(long, value_name = "FILE", num_args = 2.., required = true)]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub stats: StatArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn run(ctx: &RunContext, cmd: SigCmd) -> Result<()> {
    match cmd {
        SigCmd::Test(args) => test(ctx, args),
        SigCmd::Matrix(args) => matrix(ctx, args),
    }
}

fn test(ctx: &RunContext, args: TestArgs) -> Result<()> {
    let run_a = ScoredRun::load(&args.run_a)?;
    let run_b = ScoredRun::load(&args.run_b)?;
    let cfg = args.stats.config();
    let result = perm_both_test(
        run_a.scores(&args.stats.metric)?,
        run_b.scores(&args.stats.metric)?,
        &cfg,
    )?;
    let payload = serde_json::json!({
        "metric": args.stats.metric,
        "run_a": run_a.run_id,
        "run_b": run_b.run_id,
        "result": result,
    });
    emit(args.output.as_deref(), &serde_json::to_string_pretty(&payload)?)?;
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage(
        "sig-test",
        &[&args.run_a, &args.run_b],
        &outputs,
        Some(format!("p = {}", result.p_value)),
    )?;
    Ok(())
}

fn matrix(ctx: &RunContext, args: MatrixArgs) -> Result<()> {
    let runs: Vec<ScoredRun> = args.runs.iter().map(ScoredRun::load).collect::<Result<_>>()?;
    let cfg = args.stats.config();
    let matrix = pairwise_matrix(&runs, &args.stats.metric, &cfg)?;
    let rendered = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&matrix)?,
        OutputFormat::Markdown => matrix.to_markdown(),
    };
    emit(args.output.as_deref(), &rendered)?;
    let inputs: Vec<&Path> = args.runs.iter().map(|p| p.as_path()).collect();
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage("sig-matrix", &inputs, &outputs, None)?;
    Ok(())
}
