use std::path::PathBuf;

use clap::{Args, Subcommand};

use promptmt::corpus::{filter_target_original, load_pool, pool_stats, save_pool_jsonl};
use promptmt::error::Result;

use super::{resolve_lang_pair, resolve_pool_source, ArgPoolFormat, ArgPoolKind};
use crate::context::{emit, RunContext};

#[derive(Subcommand)]
pub enum PoolCmd {
    /// Size, granularity, and mean source length of a pool.
    Stats(PoolArgs),
    /// Keep only target-original pairs.
    Filter(FilterArgs),
}

#[derive(Args)]
pub struct PoolArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ArgPoolFormat>,
    #[arg(long, value_enum, default_value = "custom")]
    pub kind: ArgPoolKind,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub target_lang: Option<String>,
    /// Write stats JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub pool: PoolArgs,
    /// Filtered pool JSONL destination.
    #[arg(long, value_name = "FILE")]
    pub filtered_output: PathBuf,
}

pub fn run(ctx: &RunContext, cmd: PoolCmd) -> Result<()> {
    match cmd {
        PoolCmd::Stats(args) => stats(ctx, args),
        PoolCmd::Filter(args) => filter(ctx, args),
    }
}

fn load(ctx: &RunContext, args: &PoolArgs) -> Result<(promptmt::corpus::Pool, PathBuf)> {
    let kind = args.kind.into();
    let (path, format) = resolve_pool_source(ctx, args.input.as_ref(), args.format, kind)?;
    let lang_pair = resolve_lang_pair(ctx, args.source_lang.as_deref(), args.target_lang.as_deref());
    let pool = load_pool(&path, format, kind, lang_pair)?;
    Ok((pool, path))
}

fn stats(ctx: &RunContext, args: PoolArgs) -> Result<()> {
    let (pool, path) = load(ctx, &args)?;
    let stats = pool_stats(&pool);
    emit(args.output.as_deref(), &serde_json::to_string_pretty(&stats)?)?;
    let outputs: Vec<&std::path::Path> = args.output.iter().map(|p| p.as_path()).collect();
    ctx.record_stage("pool-stats", &[&path], &outputs, None)?;
    Ok(())
}

fn filter(ctx: &RunContext, args: FilterArgs) -> Result<()> {
    let (pool, path) = load(ctx, &args.pool)?;
    let filtered = filter_target_original(&pool);
    save_pool_jsonl(&filtered, &args.filtered_output)?;
    ctx.log(
        "pool-filter",
        "info",
        &format!("kept {} of {} pairs", filtered.len(), pool.len()),
    );
    ctx.record_stage("pool-filter", &[&path], &[&args.filtered_output], None)?;
    Ok(())
}
