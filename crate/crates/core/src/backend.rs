//! Uniform client interface to text-generation services: greedy generation
//! with a stop sequence, and continuation log-probability scoring.
//!
//! Two implementations ship: a generic HTTP JSON adapter and a table-driven
//! mock so the whole pipeline runs offline and deterministically.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_TOKENS_SENTENCE: u32 = 256;
pub const DEFAULT_MAX_TOKENS_PARAGRAPH: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub stop_sequence: String,
    pub max_tokens: u32,
}

impl GenerationRequest {
    /// Greedy decoding stopped at a newline.
    pub fn greedy(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            stop_sequence: "\n".to_string(),
            max_tokens: DEFAULT_MAX_TOKENS_SENTENCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::EmptyInput("generation prompt is empty".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.stop_sequence.is_empty() {
            return Err(Error::Config("stop sequence must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub context: String,
    pub continuation: String,
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<()> {
        if self.continuation.is_empty() {
            return Err(Error::EmptyInput("score continuation is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub latency: Duration,
    pub attempts: u32,
}

impl GenerationResponse {
    /// Empty completions are recorded for evaluation, not treated as errors.
    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub log_prob: f64,
    pub latency: Duration,
    pub attempts: u32,
}

/// A text-generation service. Implementations must be shareable across
/// worker threads.
pub trait TextBackend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse>;

    fn supports_scoring(&self) -> bool {
        false
    }

    fn score(&self, _req: &ScoreRequest) -> Result<ScoreResponse> {
        Err(Error::Unsupported {
            operation: "scoring".into(),
        })
    }
}

fn truncate_at_stop(text: &str, stop: &str) -> String {
    match text.find(stop) {
        Some(pos) => text[..pos].to_string(),
        None => text.to_string(),
    }
}

/// Run requests with at most `width` in flight; results come back in input
/// order regardless of completion order.
pub fn generate_batch(
    backend: &dyn TextBackend,
    requests: &[GenerationRequest],
    width: usize,
) -> Result<Vec<GenerationResponse>> {
    let width = width.max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<GenerationResponse>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..width.min(requests.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= requests.len() {
                    break;
                }
                let result = backend.generate(&requests[idx]);
                *slots[idx].lock().unwrap() = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize, Serialize)]
struct MockTable {
    #[serde(default)]
    generations: HashMap<String, String>,
    #[serde(default)]
    scores: Vec<MockScore>,
    /// When true, prompts without a table entry yield a deterministic
    /// completion derived from the final source line of the prompt.
    #[serde(default)]
    echo_fallback: bool,
}

#[derive(Debug, Deserialize, Serialize)]
struct MockScore {
    context: String,
    continuation: String,
    log_prob: f64,
}

/// Table-driven backend; with a fixed table the whole pipeline is
/// bit-for-bit deterministic.
#[derive(Debug, Default)]
pub struct MockBackend {
    generations: HashMap<String, String>,
    scores: HashMap<(String, String), f64>,
    echo_fallback: bool,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enable a deterministic fallback completion for prompts missing from
    /// the table: `mock:<final source line text>`.
    pub fn with_echo_fallback(mut self) -> Self {
        self.echo_fallback = true;
        self
    }

    pub fn insert_generation(&mut self, prompt: impl Into<String>, completion: impl Into<String>) {
        self.generations.insert(prompt.into(), completion.into());
    }

    pub fn insert_score(
        &mut self,
        context: impl Into<String>,
        continuation: impl Into<String>,
        log_prob: f64,
    ) {
        self.scores
            .insert((context.into(), continuation.into()), log_prob);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let table: MockTable = serde_json::from_reader(BufReader::new(file))?;
        let mut backend = MockBackend {
            generations: table.generations,
            scores: HashMap::new(),
            echo_fallback: table.echo_fallback,
        };
        for s in table.scores {
            if s.log_prob > 0.0 || !s.log_prob.is_finite() {
                return Err(Error::Config(format!(
                    "mock log_prob must be finite and <= 0, got {}",
                    s.log_prob
                )));
            }
            backend.scores.insert((s.context, s.continuation), s.log_prob);
        }
        Ok(backend)
    }

    /// The text after the last `<label>: ` prefix on the second-to-last
    /// prompt line, i.e. the current source slot.
    fn echo_completion(prompt: &str) -> String {
        let source_line = prompt
            .split('\n')
            .rev()
            .nth(1)
            .unwrap_or_default();
        let text = match source_line.split_once(": ") {
            Some((_, rest)) => rest,
            None => source_line,
        };
        format!("mock:{text}")
    }
}

impl TextBackend for MockBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        req.validate()?;
        let raw = match self.generations.get(&req.prompt) {
            Some(completion) => completion.clone(),
            None if self.echo_fallback => Self::echo_completion(&req.prompt),
            None => {
                return Err(Error::Backend {
                    message: "mock table has no entry for prompt".into(),
                    attempts: 1,
                })
            }
        };
        Ok(GenerationResponse {
            text: truncate_at_stop(&raw, &req.stop_sequence),
            latency: Duration::ZERO,
            attempts: 1,
        })
    }

    fn supports_scoring(&self) -> bool {
        true
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        req.validate()?;
        match self
            .scores
            .get(&(req.context.clone(), req.continuation.clone()))
        {
            Some(&log_prob) => Ok(ScoreResponse {
                log_prob,
                latency: Duration::ZERO,
                attempts: 1,
            }),
            None => Err(Error::Backend {
                message: "mock table has no score for (context, continuation)".into(),
                attempts: 1,
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Token bucket limiting requests per second across worker threads.
#[derive(Debug)]
struct TokenBucket {
    state: Mutex<BucketState>,
    capacity: f64,
    refill_per_sec: f64,
}

#[derive(Debug)]
struct BucketState {
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(capacity: f64, refill_per_sec: f64) -> Self {
        TokenBucket {
            state: Mutex::new(BucketState {
                tokens: capacity,
                last: Instant::now(),
            }),
            capacity,
            refill_per_sec,
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let elapsed = now.duration_since(state.last).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
                state.last = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL, e.g. `http://localhost:8080`.
    pub endpoint: String,
    #[serde(default = "default_generate_path")]
    pub generate_path: String,
    #[serde(default = "default_score_path")]
    pub score_path: String,
    /// Name of the environment variable holding the credential. The value is
    /// sent as a bearer token and never written anywhere.
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Requests per second; `None` disables rate limiting.
    #[serde(default)]
    pub requests_per_sec: Option<f64>,
}

fn default_generate_path() -> String {
    "/generate".to_string()
}
fn default_score_path() -> String {
    "/score".to_string()
}
fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_timeout_secs() -> u64 {
    120
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint: endpoint.into(),
            generate_path: default_generate_path(),
            score_path: default_score_path(),
            auth_env_var: None,
            max_attempts: default_max_attempts(),
            base_backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            requests_per_sec: None,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    auth_token: Option<String>,
    bucket: Option<TokenBucket>,
}

#[derive(Serialize)]
struct GenerateWire<'a> {
    prompt: &'a str,
    temperature: f64,
    stop: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct GenerateWireResponse {
    text: String,
}

#[derive(Serialize)]
struct ScoreWire<'a> {
    context: &'a str,
    continuation: &'a str,
}

#[derive(Deserialize)]
struct ScoreWireResponse {
    log_prob: f64,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let auth_token = match &config.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("credential environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .new_agent();
        let bucket = config
            .requests_per_sec
            .map(|rps| TokenBucket::new(rps.max(1.0), rps));
        Ok(HttpBackend {
            config,
            agent,
            auth_token,
            bucket,
        })
    }

    fn post_json<B: Serialize, R: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<(R, u32)> {
        let url = format!(
            "{}{}",
            self.config.endpoint.trim_end_matches('/'),
            path
        );
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if let Some(bucket) = &self.bucket {
                bucket.acquire();
            }
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.auth_token {
                req = req.header("Authorization", format!("Bearer {token}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        let parsed: R = resp.body_mut().read_json().map_err(|e| Error::Backend {
                            message: format!("bad response body: {e}"),
                            attempts: attempt,
                        })?;
                        return Ok((parsed, attempt));
                    }
                    let transient = status == 429 || (500..600).contains(&status);
                    if !transient {
                        return Err(Error::Backend {
                            message: format!("service returned status {status}"),
                            attempts: attempt,
                        });
                    }
                    if attempt >= self.config.max_attempts {
                        return Err(Error::Backend {
                            message: format!(
                                "retries exhausted, last status {status}"
                            ),
                            attempts: attempt,
                        });
                    }
                }
                Err(e) => {
                    if attempt >= self.config.max_attempts {
                        return Err(Error::Backend {
                            message: format!("retries exhausted: {e}"),
                            attempts: attempt,
                        });
                    }
                }
            }
            let backoff = self.config.base_backoff_ms << (attempt - 1).min(8);
            std::thread::sleep(Duration::from_millis(backoff));
        }
    }
}

impl TextBackend for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        req.validate()?;
        let started = Instant::now();
        let wire = GenerateWire {
            prompt: &req.prompt,
            temperature: req.temperature,
            stop: &req.stop_sequence,
            max_tokens: req.max_tokens,
        };
        let (resp, attempts): (GenerateWireResponse, u32) =
            self.post_json(&self.config.generate_path, &wire)?;
        Ok(GenerationResponse {
            text: truncate_at_stop(&resp.text, &req.stop_sequence),
            latency: started.elapsed(),
            attempts,
        })
    }

    fn supports_scoring(&self) -> bool {
        true
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        req.validate()?;
        let started = Instant::now();
        let wire = ScoreWire {
            context: &req.context,
            continuation: &req.continuation,
        };
        let (resp, attempts): (ScoreWireResponse, u32) =
            self.post_json(&self.config.score_path, &wire)?;
        if !resp.log_prob.is_finite() || resp.log_prob > 0.0 {
            return Err(Error::Backend {
                message: format!(
                    "service returned invalid log_prob {} (must be finite and <= 0)",
                    resp.log_prob
                ),
                attempts,
            });
        }
        Ok(ScoreResponse {
            log_prob: resp.log_prob,
            latency: started.elapsed(),
            attempts,
        })
    }
}
