use std::collections::HashMap;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};

use promptmt::backend::{
    generate_batch, GenerationRequest, HttpBackend, HttpBackendConfig, MockBackend, TextBackend,
    DEFAULT_MAX_TOKENS_PARAGRAPH, DEFAULT_MAX_TOKENS_SENTENCE,
};
use promptmt::corpus::{load_pool, Granularity, Pool, PoolKind, TestSet};
use promptmt::error::{Error, Result};
use promptmt::evaluation::ScoredRun;
use promptmt::hash::mix_seed;
use promptmt::prompting::{parse_completion, render_prompt, NewlinePolicy, PromptTemplate};
use promptmt::selection::{
    build_index, knn_query, select_random, AnnParams, HashEmbedder, IndexMode, IndexSpace,
    SelectionConfig, Strategy,
};

use super::{resolve_lang_pair, resolve_pool_source, resolve_test_set, ArgPoolFormat, ArgPoolKind};
use crate::config::BackendKind;
use crate::context::RunContext;
use crate::records::{read_jsonl, write_jsonl, PromptRecord, SelectionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgStrategy {
    Random,
    #[value(alias = "knn_bow")]
    KnnBow,
    #[value(alias = "knn_dense")]
    KnnDense,
    Fixed,
}

impl From<ArgStrategy> for Strategy {
    fn from(value: ArgStrategy) -> Self {
        match value {
            ArgStrategy::Random => Strategy::Random,
            ArgStrategy::KnnBow => Strategy::KnnBow,
            ArgStrategy::KnnDense => Strategy::KnnDense,
            ArgStrategy::Fixed => Strategy::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgIndexMode {
    Exact,
    Approximate,
}

#[derive(Args)]
pub struct BackendArgs {
    /// Backend implementation; defaults to the config, then to mock.
    #[arg(long, value_enum)]
    pub backend: Option<ArgBackendKind>,
    /// Table file for the mock backend.
    #[arg(long, value_name = "FILE")]
    pub mock_table: Option<PathBuf>,
    /// Base URL for the HTTP backend.
    #[arg(long)]
    pub endpoint: Option<String>,
}

impl BackendArgs {
    /// Human-readable backend identity for manifests; never includes
    /// credentials.
    pub fn describe(&self, ctx: &RunContext) -> String {
        let config = ctx.config.backend.clone().unwrap_or_default();
        let kind = match self.backend {
            Some(ArgBackendKind::Mock) => BackendKind::Mock,
            Some(ArgBackendKind::Http) => BackendKind::Http,
            None => config.kind,
        };
        match kind {
            BackendKind::Mock => match self.mock_table.clone().or(config.mock_table) {
                Some(path) => format!("mock table {}", path.display()),
                None => "mock with echo fallback".to_string(),
            },
            BackendKind::Http => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .or(config.http.map(|h| h.endpoint))
                    .unwrap_or_default();
                format!("http {endpoint}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArgBackendKind {
    Mock,
    Http,
}

impl BackendArgs {
    pub fn build(&self, ctx: &RunContext) -> Result<Box<dyn TextBackend>> {
        let config = ctx.config.backend.clone().unwrap_or_default();
        let kind = match self.backend {
            Some(ArgBackendKind::Mock) => BackendKind::Mock,
            Some(ArgBackendKind::Http) => BackendKind::Http,
            None => config.kind,
        };
        match kind {
            BackendKind::Mock => {
                let table = self.mock_table.clone().or(config.mock_table);
                match table {
                    Some(path) => Ok(Box::new(MockBackend::load(path)?)),
                    None => Ok(Box::new(MockBackend::new().with_echo_fallback())),
                }
            }
            BackendKind::Http => {
                let http = match (&self.endpoint, config.http) {
                    (Some(endpoint), Some(mut http)) => {
                        http.endpoint = endpoint.clone();
                        http
                    }
                    (Some(endpoint), None) => HttpBackendConfig::new(endpoint.clone()),
                    (None, Some(http)) => http,
                    (None, None) => {
                        return Err(Error::Config(
                            "http backend needs --endpoint or a config entry".into(),
                        ))
                    }
                };
                Ok(Box::new(HttpBackend::new(http)?))
            }
        }
    }
}

#[derive(Args)]
pub struct SelectArgs {
    /// Prompt pool; defaults to the config entry for --pool-kind.
    #[arg(long, value_name = "FILE")]
    pub pool: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub pool_format: Option<ArgPoolFormat>,
    #[arg(long, value_enum, default_value = "custom")]
    pub pool_kind: ArgPoolKind,
    /// Test set JSONL; defaults to the config entry.
    #[arg(long, value_name = "FILE")]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub test_set_name: Option<String>,
    #[arg(long, value_enum)]
    pub strategy: Option<ArgStrategy>,
    /// Examples per prompt; defaults to 5 for sentence pools, 1 for
    /// paragraph pools.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Run seed; defaults to the first config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbours retrieved before truncation (kNN strategies).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub index_mode: Option<ArgIndexMode>,
    /// Cluster count for the approximate index.
    #[arg(long)]
    pub partitions: Option<usize>,
    /// Clusters scanned per query.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Held-out pool for maximum-likelihood fixed-prompt selection.
    #[arg(long, value_name = "FILE")]
    pub heldout: Option<PathBuf>,
    /// Divide held-out log-probabilities by continuation token count.
    #[arg(long)]
    pub length_normalize: bool,
    /// Reuse a persisted kNN index (the pool fingerprint is verified).
    #[arg(long, value_name = "FILE")]
    pub load_index: Option<PathBuf>,
    /// Persist the kNN index sidecar after building.
    #[arg(long, value_name = "FILE")]
    pub save_index: Option<PathBuf>,
    /// External embedding service for dense kNN; the built-in hashed
    /// n-gram embedder is used when absent.
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub embed_dims: usize,
    #[arg(long)]
    pub source_label: Option<String>,
    #[arg(long)]
    pub target_label: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Selections JSONL destination.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

fn default_shots(granularity: Granularity) -> usize {
    match granularity {
        Granularity::Sentence => 5,
        Granularity::Paragraph => 1,
    }
}

pub fn run_select(ctx: &RunContext, args: SelectArgs) -> Result<()> {
    let kind: PoolKind = args.pool_kind.into();
    let (pool_path, pool_format) =
        resolve_pool_source(ctx, args.pool.as_ref(), args.pool_format, kind)?;
    let lang_pair = resolve_lang_pair(ctx, None, None);
    let pool = load_pool(&pool_path, pool_format, kind, lang_pair.clone())?;
    let test_set = resolve_test_set(ctx, args.test_set.as_ref(), args.test_set_name.as_deref(), &lang_pair)?;

    let settings = ctx.config.selection.clone();
    let strategy: Strategy = args
        .strategy
        .map(Strategy::from)
        .or(settings.as_ref().and_then(|s| s.strategy))
        .ok_or_else(|| Error::Config("no selection strategy given".into()))?;
    let n_shots = args
        .shots
        .or(settings.as_ref().and_then(|s| s.n_shots))
        .unwrap_or_else(|| default_shots(kind.granularity()));
    let seed = args
        .seed
        .or(settings.as_ref().and_then(|s| s.seed))
        .unwrap_or_else(|| ctx.config.seeds.first().copied().unwrap_or(1));
    let mut cfg = SelectionConfig::new(strategy, n_shots, seed);
    cfg.k = args
        .k
        .or(settings.as_ref().and_then(|s| s.k))
        .unwrap_or(n_shots);
    cfg.index_mode = match args.index_mode {
        Some(ArgIndexMode::Exact) => IndexMode::Exact,
        Some(ArgIndexMode::Approximate) => IndexMode::Approximate,
        None => settings
            .as_ref()
            .and_then(|s| s.index_mode)
            .unwrap_or(IndexMode::Exact),
    };
    let config_ann = settings.as_ref().and_then(|s| s.approx_params);
    cfg.approx_params = AnnParams {
        num_partitions: args
            .partitions
            .or(config_ann.map(|a| a.num_partitions))
            .unwrap_or(AnnParams::default().num_partitions),
        num_probes: args
            .probes
            .or(config_ann.map(|a| a.num_probes))
            .unwrap_or(AnnParams::default().num_probes),
    };

    let records = match strategy {
        Strategy::Random => select_random_records(&pool, &test_set, &cfg)?,
        Strategy::KnnBow => {
            select_knn_records(&args, &pool, &test_set, &cfg, IndexSpace::BowCosine)?
        }
        Strategy::KnnDense => {
            select_knn_records(&args, &pool, &test_set, &cfg, IndexSpace::DenseEuclidean)?
        }
        Strategy::Fixed => select_fixed_records(ctx, &args, &pool, &test_set, &cfg)?,
    };
    write_jsonl(&args.output, &records)?;
    ctx.log(
        "select",
        "info",
        &format!("selected examples for {} segments with {strategy:?}", records.len()),
    );
    ctx.record_stage(
        "select",
        &[&pool_path],
        &[&args.output],
        Some(format!("strategy {strategy:?}, seed {seed}, shots {n_shots}")),
    )?;
    Ok(())
}

fn select_random_records(
    pool: &Pool,
    test_set: &TestSet,
    cfg: &SelectionConfig,
) -> Result<Vec<SelectionRecord>> {
    // A fresh draw per input: each segment's draw derives from the run seed
    // and the segment position, so the whole run is seed-reproducible.
    let mut records = Vec::with_capacity(test_set.len());
    for (i, segment) in test_set.segments().iter().enumerate() {
        let mut per_segment = cfg.clone();
        per_segment.seed = mix_seed(cfg.seed, i as u64);
        let set = select_random(pool, &per_segment)?;
        records.push(SelectionRecord {
            segment_id: segment.id.clone(),
            example_ids: set.example_ids().iter().map(|s| s.to_string()).collect(),
            distances: None,
            strategy: "random".into(),
            seed: Some(cfg.seed),
            pool_kind: pool.kind.to_string(),
        });
    }
    Ok(records)
}

fn select_knn_records(
    args: &SelectArgs,
    pool: &Pool,
    test_set: &TestSet,
    cfg: &SelectionConfig,
    space: IndexSpace,
) -> Result<Vec<SelectionRecord>> {
    let embedder: Box<dyn promptmt::selection::EmbeddingProvider> = match &args.embed_endpoint {
        Some(endpoint) => Box::new(promptmt::selection::HttpEmbedder::new(
            endpoint.clone(),
            args.embed_dims,
            120,
        )),
        None => Box::new(HashEmbedder::default()),
    };
    let embedder_ref: Option<&dyn promptmt::selection::EmbeddingProvider> = match space {
        IndexSpace::BowCosine => None,
        IndexSpace::DenseEuclidean => Some(embedder.as_ref()),
    };
    let index = match &args.load_index {
        Some(path) => {
            let index = promptmt::selection::VectorIndex::load(path, pool)?;
            if index.space() != space {
                return Err(Error::Config(format!(
                    "index at {} holds {:?} vectors but the strategy needs {:?}",
                    path.display(),
                    index.space(),
                    space
                )));
            }
            index
        }
        None => build_index(pool, space, embedder_ref, cfg)?,
    };
    if let Some(path) = &args.save_index {
        index.save(path)?;
    }
    let mut records = Vec::with_capacity(test_set.len());
    for segment in test_set.segments() {
        let set = knn_query(&index, pool, &segment.source_text, embedder_ref, cfg)?;
        records.push(SelectionRecord {
            segment_id: segment.id.clone(),
            example_ids: set.example_ids().iter().map(|s| s.to_string()).collect(),
            distances: set.distances.clone(),
            strategy: match space {
                IndexSpace::BowCosine => "knn_bow".into(),
                IndexSpace::DenseEuclidean => "knn_dense".into(),
            },
            seed: None,
            pool_kind: pool.kind.to_string(),
        });
    }
    Ok(records)
}

fn select_fixed_records(
    ctx: &RunContext,
    args: &SelectArgs,
    pool: &Pool,
    test_set: &TestSet,
    cfg: &SelectionConfig,
) -> Result<Vec<SelectionRecord>> {
    let heldout_path = args
        .heldout
        .as_ref()
        .ok_or_else(|| Error::Config("fixed selection needs --heldout".into()))?;
    let heldout = load_pool(
        heldout_path,
        promptmt::corpus::PoolFormat::Jsonl,
        pool.kind,
        pool.lang_pair.clone(),
    )?;
    let lang_pair = resolve_lang_pair(ctx, args.source_label.as_deref(), args.target_label.as_deref());
    let template = template_from(ctx, args.source_label.as_deref(), args.target_label.as_deref(), &lang_pair)?;
    let backend = args.backend.build(ctx)?;
    let normalization = if args.length_normalize {
        promptmt::selection::LengthNormalization::PerToken
    } else {
        promptmt::selection::LengthNormalization::RawSum
    };
    let ranking = promptmt::selection::select_fixed_ml_with(
        pool,
        &heldout,
        backend.as_ref(),
        &template,
        normalization,
    )?;
    let (winner, total) = ranking.first().expect("candidates are non-empty").clone();
    ctx.log(
        "select",
        "info",
        &format!("fixed prompt {winner:?} with total log-probability {total}"),
    );
    if cfg.n_shots != 1 {
        ctx.log(
            "select",
            "warn",
            &format!("fixed selection uses 1 example; ignoring shots = {}", cfg.n_shots),
        );
    }
    Ok(test_set
        .segments()
        .iter()
        .map(|segment| SelectionRecord {
            segment_id: segment.id.clone(),
            example_ids: vec![winner.clone()],
            distances: None,
            strategy: "fixed".into(),
            seed: None,
            pool_kind: pool.kind.to_string(),
        })
        .collect())
}

fn template_from(
    ctx: &RunContext,
    source_label: Option<&str>,
    target_label: Option<&str>,
    lang_pair: &promptmt::corpus::LangPair,
) -> Result<PromptTemplate> {
    let template_cfg = ctx.config.template.as_ref();
    let source = source_label
        .map(str::to_string)
        .or_else(|| template_cfg.map(|t| t.source_label.clone()))
        .unwrap_or_else(|| lang_pair.source.clone());
    let target = target_label
        .map(str::to_string)
        .or_else(|| template_cfg.map(|t| t.target_label.clone()))
        .unwrap_or_else(|| lang_pair.target.clone());
    PromptTemplate::new(source, target)
}

#[derive(Subcommand)]
pub enum PromptCmd {
    /// Render prompts for every selection record.
    Render(RenderArgs),
}

#[derive(Args)]
pub struct RenderArgs {
    /// Selections JSONL from `select`.
    #[arg(long, value_name = "FILE")]
    pub selections: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub pool: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub pool_format: Option<ArgPoolFormat>,
    #[arg(long, value_enum, default_value = "custom")]
    pub pool_kind: ArgPoolKind,
    #[arg(long, value_name = "FILE")]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub test_set_name: Option<String>,
    #[arg(long)]
    pub source_label: Option<String>,
    #[arg(long)]
    pub target_label: Option<String>,
    /// Prompts JSONL destination.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

pub fn run_prompt(ctx: &RunContext, cmd: PromptCmd) -> Result<()> {
    let PromptCmd::Render(args) = cmd;
    let kind: PoolKind = args.pool_kind.into();
    let (pool_path, pool_format) =
        resolve_pool_source(ctx, args.pool.as_ref(), args.pool_format, kind)?;
    let lang_pair = resolve_lang_pair(ctx, None, None);
    let pool = load_pool(&pool_path, pool_format, kind, lang_pair.clone())?;
    let test_set = resolve_test_set(ctx, args.test_set.as_ref(), args.test_set_name.as_deref(), &lang_pair)?;
    let template = template_from(ctx, args.source_label.as_deref(), args.target_label.as_deref(), &lang_pair)?;

    let selections: Vec<SelectionRecord> = read_jsonl(&args.selections)?;
    let by_segment: HashMap<&str, &SelectionRecord> = selections
        .iter()
        .map(|r| (r.segment_id.as_str(), r))
        .collect();
    let by_id: HashMap<&str, &promptmt::corpus::SegmentPair> =
        pool.pairs().iter().map(|p| (p.id.as_str(), p)).collect();

    let mut prompts = Vec::with_capacity(test_set.len());
    for segment in test_set.segments() {
        let record = by_segment.get(segment.id.as_str()).ok_or_else(|| {
            Error::Config(format!("no selection record for segment {:?}", segment.id))
        })?;
        let examples: Vec<promptmt::corpus::SegmentPair> = record
            .example_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|&p| p.clone())
                    .ok_or_else(|| Error::Config(format!("example id {id:?} not in pool")))
            })
            .collect::<Result<_>>()?;
        let rendered = render_prompt(
            &template,
            &examples,
            &segment.source_text,
            NewlinePolicy::SpaceJoin,
        )?;
        prompts.push(PromptRecord {
            segment_id: segment.id.clone(),
            prompt: rendered.text,
            example_ids: record.example_ids.clone(),
        });
    }
    write_jsonl(&args.output, &prompts)?;
    ctx.record_stage(
        "prompt-render",
        &[&args.selections, &pool_path],
        &[&args.output],
        None,
    )?;
    Ok(())
}

#[derive(Args)]
pub struct TranslateArgs {
    /// Prompts JSONL from `prompt render`.
    #[arg(long, value_name = "FILE")]
    pub prompts: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub run_id: String,
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_set_name: Option<String>,
    /// Paragraph prompts get a larger generation budget.
    #[arg(long)]
    pub paragraph: bool,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// In-flight request bound.
    #[arg(long, default_value_t = 1)]
    pub width: usize,
    /// Run JSON destination.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

pub fn run_translate(ctx: &RunContext, args: TranslateArgs) -> Result<()> {
    let prompts: Vec<PromptRecord> = read_jsonl(&args.prompts)?;
    let backend = args.backend.build(ctx)?;
    let max_tokens = args.max_tokens.unwrap_or(if args.paragraph {
        DEFAULT_MAX_TOKENS_PARAGRAPH
    } else {
        DEFAULT_MAX_TOKENS_SENTENCE
    });
    let requests: Vec<GenerationRequest> = prompts
        .iter()
        .map(|p| {
            let mut req = GenerationRequest::greedy(p.prompt.clone());
            req.max_tokens = max_tokens;
            req
        })
        .collect();
    let responses = generate_batch(backend.as_ref(), &requests, args.width)?;
    let outputs: Vec<String> = responses
        .iter()
        .map(|r| parse_completion(&r.text).to_string())
        .collect();
    let empty = outputs.iter().filter(|o| o.is_empty()).count();
    if empty > 0 {
        ctx.log(
            "translate",
            "warn",
            &format!("{empty} of {} translations are empty", outputs.len()),
        );
    }

    let mut run = ScoredRun::new(
        &args.run_id,
        args.system.clone().unwrap_or_else(|| args.run_id.clone()),
        args.seed,
        outputs,
    );
    run.test_set = args
        .test_set_name
        .clone()
        .or_else(|| ctx.config.test_set.as_ref().map(|t| t.name.clone()));
    run.save(&args.output)?;
    ctx.record_stage(
        "translate",
        &[&args.prompts],
        &[&args.output],
        Some(format!(
            "run {} over {} prompts via {}",
            args.run_id,
            prompts.len(),
            args.backend.describe(ctx)
        )),
    )?;
    Ok(())
}
