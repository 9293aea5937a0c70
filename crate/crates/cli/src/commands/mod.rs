pub mod eval;
pub mod mqm;
pub mod overlap;
pub mod pipeline;
pub mod pool;
pub mod sig;

use std::path::PathBuf;

use clap::ValueEnum;

use promptmt::corpus::{LangPair, PoolFormat, PoolKind, TestSet};
use promptmt::error::{Error, Result};

use crate::context::RunContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgPoolFormat {
    Jsonl,
    Tsv,
}

impl From<ArgPoolFormat> for PoolFormat {
    fn from(value: ArgPoolFormat) -> Self {
        match value {
            ArgPoolFormat::Jsonl => PoolFormat::Jsonl,
            ArgPoolFormat::Tsv => PoolFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgPoolKind {
    #[value(alias = "wmt_full")]
    WmtFull,
    #[value(alias = "wmt_dev")]
    WmtDev,
    #[value(alias = "high_end")]
    HighEnd,
    Custom,
}

impl From<ArgPoolKind> for PoolKind {
    fn from(value: ArgPoolKind) -> Self {
        match value {
            ArgPoolKind::WmtFull => PoolKind::WmtFull,
            ArgPoolKind::WmtDev => PoolKind::WmtDev,
            ArgPoolKind::HighEnd => PoolKind::HighEnd,
            ArgPoolKind::Custom => PoolKind::Custom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Markdown,
}

/// Language pair from flags, falling back to the config, then to
/// English->German.
pub fn resolve_lang_pair(
    ctx: &RunContext,
    source: Option<&str>,
    target: Option<&str>,
) -> LangPair {
    let config = ctx.config.lang_pair.clone();
    LangPair {
        source: source
            .map(str::to_string)
            .or_else(|| config.as_ref().map(|lp| lp.source.clone()))
            .unwrap_or_else(|| "English".to_string()),
        target: target
            .map(str::to_string)
            .or_else(|| config.as_ref().map(|lp| lp.target.clone()))
            .unwrap_or_else(|| "German".to_string()),
    }
}

/// Pool location from flags or the config entry for its kind.
pub fn resolve_pool_source(
    ctx: &RunContext,
    path: Option<&PathBuf>,
    format: Option<ArgPoolFormat>,
    kind: PoolKind,
) -> Result<(PathBuf, PoolFormat)> {
    let entry = ctx.config.pool_entry(kind);
    let path = path
        .cloned()
        .or_else(|| entry.map(|e| e.path.clone()))
        .ok_or_else(|| {
            Error::Config(format!(
                "no pool path given and the config has no {kind} pool"
            ))
        })?;
    let format = format
        .map(PoolFormat::from)
        .or_else(|| entry.map(|e| e.format))
        .unwrap_or(PoolFormat::Jsonl);
    Ok((path, format))
}

pub fn resolve_test_set(
    ctx: &RunContext,
    path: Option<&PathBuf>,
    name: Option<&str>,
    lang_pair: &LangPair,
) -> Result<TestSet> {
    let entry = ctx.config.test_set.as_ref();
    let path = path
        .cloned()
        .or_else(|| entry.map(|e| e.path.clone()))
        .ok_or_else(|| Error::Config("no test set given (flag --test-set or config)".into()))?;
    let name = name
        .map(str::to_string)
        .or_else(|| entry.map(|e| e.name.clone()))
        .unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "test".to_string())
        });
    promptmt::corpus::load_test_set(&path, name, lang_pair.clone(), None)
}
