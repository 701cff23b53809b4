//! Remote text-completion adapter.
//!
//! Requests use the chat-completions JSON shape
//! `{model, messages: [{role, content}], temperature, logprobs?}`. Every
//! successfully parsed reply is appended to a JSONL transcript keyed by the
//! SHA-256 of the serialized request, so reruns are served from disk.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{class_to_correlation, round_to_class};
use crate::ratelimit::RateLimiter;
use crate::{Error, Result};

use super::prompt::{build_prompt, parse_reply, Completion};
use super::segment::segment_article;
use super::{Predictor, PredictorOutput, PromptContext};

pub const API_KEY_ENV: &str = "CORRCAST_API_KEY";
pub const API_URL_ENV: &str = "CORRCAST_API_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<bool>,
}

impl CompletionRequest {
    pub fn cache_key(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&body))
    }
}

pub trait CompletionTransport: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, String>;
}

/// Chat-completions endpoint over HTTP.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the endpoint from `CORRCAST_API_URL` and the key from `key_var`.
    pub fn from_env(key_var: &str, timeout: Duration) -> Result<Self> {
        let url = std::env::var(API_URL_ENV)
            .map_err(|_| Error::Transport(format!("{API_URL_ENV} is not set")))?;
        let key = std::env::var(key_var).ok();
        if key.is_none() {
            warn!("{key_var} is not set; sending requests without credentials");
        }
        Ok(Self::new(url, key, timeout))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

impl CompletionTransport for HttpTransport {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, String> {
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = call.send_json(request).map_err(|e| match e {
            ureq::Error::Status(code, _) => format!("HTTP {code}"),
            other => other.to_string(),
        })?;
        let body: ChatResponse = resp.into_json().map_err(|e| e.to_string())?;
        let choice = body
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| "response has no choices".to_string())?;
        let first_token_logprob = choice
            .logprobs
            .and_then(|l| l.content)
            .and_then(|c| c.first().map(|t| t.logprob));
        Ok(Completion {
            text: choice.message.content,
            first_token_logprob,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TranscriptEntry {
    key: String,
    request: CompletionRequest,
    response: Completion,
}

/// Prompt-hash keyed record of accepted replies.
pub struct TranscriptCache {
    entries: Mutex<HashMap<String, Completion>>,
    sink: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl TranscriptCache {
    pub fn in_memory() -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
            sink: Mutex::new(None),
            path: None,
        }
    }

    /// Loads an existing transcript (if any) and appends new entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.insert(entry.key, entry.response);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Mutex::new(entries),
            sink: Mutex::new(Some(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Completion> {
        self.entries.lock().expect("cache poisoned").get(key).cloned()
    }

    pub fn store(&self, request: &CompletionRequest, response: &Completion) -> Result<()> {
        let key = request.cache_key();
        let mut entries = self.entries.lock().expect("cache poisoned");
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = self.sink.lock().expect("cache poisoned").as_mut() {
            let entry = TranscriptEntry {
                key: key.clone(),
                request: request.clone(),
                response: response.clone(),
            };
            serde_json::to_writer(&mut *file, &entry)?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        entries.insert(key, response.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub max_retries: usize,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
}

impl RetryPolicy {
    pub fn backoff(&self, retry: usize) -> Duration {
        let factor = 1u32 << retry.saturating_sub(1).min(20);
        self.base_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub model: String,
    pub request_logprobs: bool,
    pub retry: RetryPolicy,
    /// Word budget per article segment.
    pub max_tokens_per_segment: usize,
    pub seed: u64,
    /// Minimum spacing between requests to the endpoint.
    pub min_interval: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".into(),
            request_logprobs: true,
            retry: RetryPolicy::default(),
            max_tokens_per_segment: 3000,
            seed: 0,
            min_interval: Duration::ZERO,
        }
    }
}

/// Text-completion predictor with retries, segmentation and caching.
pub struct RemotePredictor {
    name: String,
    config: RemoteConfig,
    transport: Box<dyn CompletionTransport>,
    cache: TranscriptCache,
    limiter: RateLimiter,
}

impl RemotePredictor {
    pub fn new(
        name: impl Into<String>,
        config: RemoteConfig,
        transport: Box<dyn CompletionTransport>,
        cache: TranscriptCache,
    ) -> Self {
        let limiter = RateLimiter::new(config.min_interval);
        Self {
            name: name.into(),
            config,
            transport,
            cache,
            limiter,
        }
    }

    pub fn cache(&self) -> &TranscriptCache {
        &self.cache
    }

    pub fn request_for(&self, ctx: &PromptContext) -> CompletionRequest {
        CompletionRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: build_prompt(ctx),
            }],
            temperature: 0.0,
            logprobs: self.config.request_logprobs.then_some(true),
        }
    }

    fn predict_segment(&self, ctx: &PromptContext) -> Result<PredictorOutput> {
        let request = self.request_for(ctx);
        let key = request.cache_key();
        if let Some(cached) = self.cache.get(&key) {
            if let Ok(out) = parse_reply(&cached, ctx.scheme) {
                return Ok(out);
            }
        }
        let mut last_error = String::new();
        for attempt in 0..=self.config.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.retry.backoff(attempt));
            }
            self.limiter.acquire();
            let completion = match self.transport.complete(&request) {
                Ok(c) => c,
                Err(e) => {
                    debug!("{}: attempt {attempt} transport error: {e}", self.name);
                    last_error = e;
                    continue;
                }
            };
            match parse_reply(&completion, ctx.scheme) {
                Ok(out) => {
                    self.cache.store(&request, &completion)?;
                    return Ok(out);
                }
                Err(e) => {
                    debug!("{}: attempt {attempt}: {e}", self.name);
                    last_error = e.to_string();
                }
            }
        }
        Err(Error::MissingPrediction(format!(
            "{} gave no usable reply for {} after {} attempts: {last_error}",
            self.name,
            ctx.month,
            self.config.retry.max_retries + 1
        )))
    }
}

impl Predictor for RemotePredictor {
    fn name(&self) -> &str {
        &self.name
    }

    /// Per-segment classes are averaged in correlation space and re-rounded;
    /// the probability is the mean of the segment probabilities.
    fn predict(&self, ctx: &PromptContext) -> Result<PredictorOutput> {
        let segments = segment_article(&ctx.article, self.config.max_tokens_per_segment, self.config.seed);
        let mut outputs = Vec::with_capacity(segments.len());
        let mut last_err = None;
        for segment in segments {
            let seg_ctx = PromptContext {
                article: segment,
                ..ctx.clone()
            };
            match self.predict_segment(&seg_ctx) {
                Ok(o) => outputs.push(o),
                Err(e) => {
                    warn!("{e}");
                    last_err = Some(e);
                }
            }
        }
        if outputs.is_empty() {
            return Err(last_err.unwrap_or_else(|| Error::MissingPrediction("no segments".into())));
        }
        if outputs.len() == 1 {
            return Ok(outputs.pop().expect("one output"));
        }
        let n = outputs.len() as f64;
        let mut mean_corr = 0.0;
        for o in &outputs {
            mean_corr += class_to_correlation(o.class, ctx.scheme)?;
        }
        mean_corr /= n;
        Ok(PredictorOutput {
            class: round_to_class(mean_corr, ctx.scheme),
            probability: outputs.iter().map(|o| o.probability).sum::<f64>() / n,
            probability_reported: outputs.iter().all(|o| o.probability_reported),
        })
    }
}
