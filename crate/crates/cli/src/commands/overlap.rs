use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};

use promptmt::error::Result;
use promptmt::evaluation::ScoredRun;
use promptmt::overlap::{
    build_index_from_path, overlap_delta_report, partition_test_set, CorpusFormat,
    DefaultTokenizer, OverlapConfig, OverlapIndex, OverlapPartition, OverlapTokenizer,
    WordpieceTokenizer, DEFAULT_NGRAM_ORDER,
};

use super::{resolve_lang_pair, resolve_test_set, OutputFormat};
use crate::context::{emit, RunContext};

#[derive(Subcommand)]
pub enum OverlapCmd {
    /// Index the target side of a training corpus.
    Build(BuildArgs),
    /// Split a test set into clean / overlapping segments.
    Partition(PartitionArgs),
    /// Per-subset score comparison between two runs.
    Delta(DeltaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgCorpusFormat {
    Text,
    Jsonl,
}

impl From<ArgCorpusFormat> for CorpusFormat {
    fn from(value: ArgCorpusFormat) -> Self {
        match value {
            ArgCorpusFormat::Text => CorpusFormat::Text,
            ArgCorpusFormat::Jsonl => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Args)]
pub struct TokenizerArgs {
    /// WordPiece vocabulary file; the default tokenizer is used when absent.
    #[arg(long, value_name = "FILE")]
    pub wordpiece_vocab: Option<PathBuf>,
}

impl TokenizerArgs {
    fn build(&self) -> Result<Box<dyn OverlapTokenizer>> {
        match &self.wordpiece_vocab {
            Some(path) => Ok(Box::new(WordpieceTokenizer::from_vocab_file(path)?)),
            None => Ok(Box::new(DefaultTokenizer)),
        }
    }
}

#[derive(Args)]
pub struct BuildArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub corpus_format: ArgCorpusFormat,
    /// n-gram order.
    #[arg(long, default_value_t = DEFAULT_NGRAM_ORDER)]
    pub n: usize,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    /// Index JSON destination.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct PartitionArgs {
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub test_set_name: Option<String>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    /// Partition JSON destination.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct DeltaArgs {
    #[arg(long, value_name = "FILE")]
    pub run_a: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub run_b: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub partition: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub test_set_name: Option<String>,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub metrics: Vec<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn run(ctx: &RunContext, cmd: OverlapCmd) -> Result<()> {
    match cmd {
        OverlapCmd::Build(args) => build(ctx, args),
        OverlapCmd::Partition(args) => partition(ctx, args),
        OverlapCmd::Delta(args) => delta(ctx, args),
    }
}

fn build(ctx: &RunContext, args: BuildArgs) -> Result<()> {
    let tokenizer = args.tokenizer.build()?;
    let cfg = OverlapConfig {
        n: args.n,
        ..OverlapConfig::default()
    };
    let index = build_index_from_path(
        &args.corpus,
        args.corpus_format.into(),
        &cfg,
        tokenizer.as_ref(),
    )?;
    index.save(&args.output)?;
    ctx.log(
        "overlap-build",
        "info",
        &format!(
            "indexed {} documents / {} tokens / {} {}-grams",
            index.doc_count,
            index.token_count,
            index.ngram_count(),
            index.n()
        ),
    );
    ctx.record_stage("overlap-build", &[&args.corpus], &[&args.output], None)?;
    Ok(())
}

fn partition(ctx: &RunContext, args: PartitionArgs) -> Result<()> {
    let tokenizer = args.tokenizer.build()?;
    let index = OverlapIndex::load(&args.index)?;
    let lang_pair = resolve_lang_pair(ctx, None, None);
    let test_set = resolve_test_set(ctx, args.test_set.as_ref(), args.test_set_name.as_deref(), &lang_pair)?;
    let partition = partition_test_set(&index, &test_set, tokenizer.as_ref())?;
    emit(
        args.output.as_deref(),
        &serde_json::to_string_pretty(&partition)?,
    )?;
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage(
        "overlap-partition",
        &[&args.index],
        &outputs,
        Some(format!("{}% clean", partition.percent_clean_display())),
    )?;
    Ok(())
}

fn delta(ctx: &RunContext, args: DeltaArgs) -> Result<()> {
    let run_a = ScoredRun::load(&args.run_a)?;
    let run_b = ScoredRun::load(&args.run_b)?;
    let partition: OverlapPartition = {
        let file = std::fs::File::open(&args.partition)
            .map_err(|e| promptmt::Error::io(&args.partition, e))?;
        serde_json::from_reader(std::io::BufReader::new(file))?
    };
    let lang_pair = resolve_lang_pair(ctx, None, None);
    let test_set = resolve_test_set(ctx, args.test_set.as_ref(), args.test_set_name.as_deref(), &lang_pair)?;
    let report = overlap_delta_report(&run_a, &run_b, &partition, &test_set, &args.metrics)?;
    let rendered = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&report)?,
        OutputFormat::Markdown => report.to_markdown(),
    };
    emit(args.output.as_deref(), &rendered)?;
    let outputs: Vec<&Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage(
        "overlap-delta",
        &[&args.run_a, &args.run_b, &args.partition],
        &outputs,
        None,
    )?;
    Ok(())
}
