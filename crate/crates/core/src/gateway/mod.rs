//! Chat and embedding client with caching, retries and bounded concurrency.

mod cache;
mod http;
mod mock;
mod verdict;

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{cache_key, CachedReply, ResponseCache};
pub use http::HttpBackend;
pub use mock::{hashed_embedding, MockBackend};
pub use verdict::{parse_verdict, Verdict};

use crate::demographics::Axis;
use crate::error::{Error, Result};
use crate::prompt::{user_text, PersonaPrompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub model_name: String,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub supports_logprobs: bool,
}

fn default_inflight() -> usize {
    4
}

fn default_timeout() -> f64 {
    60.0
}

impl ModelEndpoint {
    pub fn new(model_name: &str, base_url: &str) -> Self {
        Self {
            model_name: model_name.to_string(),
            base_url: base_url.to_string(),
            api_key_env: None,
            max_inflight: default_inflight(),
            timeout_secs: default_timeout(),
            supports_logprobs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_inflight < 1 {
            return Err(Error::Config(format!("{}: max_inflight must be >= 1", self.model_name)));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config(format!("{}: timeout must be > 0", self.model_name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub seed: u64,
    /// Ask for this many alternatives at the first token position.
    pub top_logprobs: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatReply {
    pub content: String,
    /// `(token, logprob)` alternatives for the first generated token.
    pub top_logprobs: Option<Vec<(String, f64)>>,
}

/// Something that can answer chat and embedding requests.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatReply>;

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    fn supports_logprobs(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pid: String,
    pub claim_id: String,
    pub condition_fingerprint: String,
    pub condition_label: String,
    pub axis: Axis,
    pub model_name: String,
    pub run: u32,
    pub seed: u64,
    pub predicted_label: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_method: Option<ConfidenceMethod>,
    pub raw_text: String,
    /// Response-cache key of the underlying request.
    #[serde(default)]
    pub request_key: String,
    pub latency_ms: u64,
    pub cached: bool,
}

impl PredictionRecord {
    /// Identity of the work item that produced this record.
    pub fn key(&self) -> RecordKey {
        RecordKey {
            model_name: self.model_name.clone(),
            condition_fingerprint: self.condition_fingerprint.clone(),
            axis: self.axis,
            run: self.run,
            pid: self.pid.clone(),
            claim_id: self.claim_id.clone(),
        }
    }

    /// Same record with the fields that vary between cold and warm runs cleared.
    pub fn without_timing(&self) -> Self {
        Self {
            latency_ms: 0,
            cached: false,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub model_name: String,
    pub condition_fingerprint: String,
    pub axis: Axis,
    pub run: u32,
    pub pid: String,
    pub claim_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMethod {
    Logprobs,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub value: f64,
    pub method: ConfidenceMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Counting semaphore bounding outstanding requests.
#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore lock");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore wait");
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Number of samples drawn when estimating confidence without logprobs.
pub const SAMPLED_CONFIDENCE_N: u64 = 10;

/// Client for one endpoint. Shareable across threads.
pub struct Gateway {
    endpoint: ModelEndpoint,
    backend: Arc<dyn ChatBackend>,
    cache: Arc<ResponseCache>,
    retry: RetryPolicy,
    slots: Semaphore,
    allow_sampled_confidence: bool,
    embed_cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("endpoint", &self.endpoint)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(endpoint: ModelEndpoint, backend: Arc<dyn ChatBackend>) -> Result<Self> {
        endpoint.validate()?;
        Ok(Self {
            slots: Semaphore::new(endpoint.max_inflight),
            endpoint,
            backend,
            cache: Arc::new(ResponseCache::in_memory()),
            retry: RetryPolicy::default(),
            allow_sampled_confidence: true,
            embed_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Gateway over the real HTTP backend for `endpoint`.
    pub fn http(endpoint: ModelEndpoint) -> Result<Self> {
        let backend = Arc::new(HttpBackend::new(&endpoint));
        Self::new(endpoint, backend)
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sampled_confidence(mut self, allow: bool) -> Self {
        self.allow_sampled_confidence = allow;
        self
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    fn call(&self, req: &ChatRequest, key: &str) -> Result<ChatReply> {
        let mut attempt = 0;
        loop {
            let res = {
                let _permit = self.slots.acquire();
                self.backend.chat(req)
            };
            match res {
                Ok(r) => return Ok(r),
                Err(Error::Transport { message, .. }) if attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    log::debug!("retrying {key} in {delay:?} after: {message}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(Error::Transport { message, .. }) => {
                    return Err(Error::Transport {
                        fingerprint: key.to_string(),
                        message: format!("{message} (after {} retries)", self.retry.max_retries),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Cached chat call; returns the reply and whether it came from the cache.
    fn cached_chat(&self, req: &ChatRequest) -> Result<(CachedReply, bool)> {
        let key = cache_key(&req.model, &req.system, &req.user, req.temperature, req.seed);
        if let Some(hit) = self.cache.get(&key) {
            if req.top_logprobs.is_none() || hit.top_logprobs.is_some() {
                return Ok((hit, true));
            }
        }
        let reply = self.call(req, &key)?;
        let entry = CachedReply {
            key,
            raw_text: reply.content,
            top_logprobs: reply.top_logprobs,
        };
        self.cache.put(entry.clone())?;
        Ok((entry, false))
    }

    /// Asks for a verdict on `prompt`. The caller fills run and condition label.
    pub fn complete(&self, prompt: &PersonaPrompt, sampling: Sampling) -> Result<PredictionRecord> {
        let req = ChatRequest {
            model: self.endpoint.model_name.clone(),
            system: prompt.system_text.clone(),
            user: prompt.user_text.clone(),
            temperature: sampling.temperature,
            seed: sampling.seed,
            top_logprobs: None,
        };
        let start = Instant::now();
        let (reply, cached) = self.cached_chat(&req)?;
        Ok(PredictionRecord {
            pid: prompt.participant_ref.clone(),
            claim_id: prompt.claim_ref.clone(),
            condition_fingerprint: prompt.condition_fingerprint.clone(),
            condition_label: String::new(),
            axis: prompt.axis,
            model_name: self.endpoint.model_name.clone(),
            run: 0,
            seed: sampling.seed,
            predicted_label: parse_verdict(&reply.raw_text),
            confidence: None,
            confidence_method: None,
            raw_text: reply.raw_text,
            request_key: reply.key,
            latency_ms: if cached { 0 } else { start.elapsed().as_millis() as u64 },
            cached,
        })
    }

    /// Model's confidence in its own zero-shot verdict on `claim_text`.
    pub fn factual_confidence(&self, claim_text: &str, seed: u64) -> Result<Confidence> {
        let user = user_text(claim_text);
        if self.endpoint.supports_logprobs && self.backend.supports_logprobs() {
            let req = ChatRequest {
                model: self.endpoint.model_name.clone(),
                system: String::new(),
                user: user.clone(),
                temperature: 0.0,
                seed,
                top_logprobs: Some(20),
            };
            let (reply, _) = self.cached_chat(&req)?;
            if let Some(value) = reply.top_logprobs.as_deref().and_then(confidence_from_logprobs) {
                return Ok(Confidence {
                    value,
                    method: ConfidenceMethod::Logprobs,
                });
            }
        }
        if !self.allow_sampled_confidence {
            return Err(Error::Capability(format!(
                "{}: token logprobs unavailable and sampling fallback disabled",
                self.endpoint.model_name
            )));
        }
        let mut verdicts = Vec::new();
        for i in 0..SAMPLED_CONFIDENCE_N {
            let req = ChatRequest {
                model: self.endpoint.model_name.clone(),
                system: String::new(),
                user: user.clone(),
                temperature: 1.0,
                seed: seed.wrapping_add(i),
                top_logprobs: None,
            };
            verdicts.push(parse_verdict(&self.cached_chat(&req)?.0.raw_text));
        }
        Ok(Confidence {
            value: confidence_from_samples(&verdicts),
            method: ConfidenceMethod::Sampled,
        })
    }

    /// Embeds each text; vectors are memoized by text hash.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Err(Error::Empty("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Validation(format!("text {i} is empty")));
        }
        let keys: Vec<String> = texts.iter().map(|t| text_hash(t)).collect();
        let missing: Vec<String> = {
            let memo = self.embed_cache.lock().expect("embed lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !memo.contains_key(*k) && seen.insert((*k).clone()))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let vecs = {
                let _permit = self.slots.acquire();
                self.backend.embed(&self.endpoint.model_name, &missing)?
            };
            if vecs.len() != missing.len() {
                return Err(Error::LengthMismatch {
                    left: missing.len(),
                    right: vecs.len(),
                });
            }
            let mut memo = self.embed_cache.lock().expect("embed lock");
            for (t, v) in missing.iter().zip(vecs) {
                memo.insert(text_hash(t), v);
            }
        }
        let memo = self.embed_cache.lock().expect("embed lock");
        let out: Vec<Vec<f32>> = keys.iter().map(|k| memo[k].clone()).collect();
        let dim = out[0].len();
        if let Some(bad) = out.iter().find(|v| v.len() != dim) {
            return Err(Error::Shape(format!(
                "embedding dimension drift: {dim} vs {}",
                bad.len()
            )));
        }
        Ok(out)
    }
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// `max(P_true, P_fake) / (P_true + P_fake)` from first-token alternatives.
///
/// Token spellings are matched after trimming and lowercasing, so `" True"`
/// and `"true"` pool their mass. Returns `None` when neither appears.
pub fn confidence_from_logprobs(top: &[(String, f64)]) -> Option<f64> {
    let (mut pt, mut pf) = (0.0, 0.0);
    for (tok, lp) in top {
        match tok.trim().to_ascii_lowercase().as_str() {
            "true" => pt += lp.exp(),
            "fake" => pf += lp.exp(),
            _ => {}
        }
    }
    let total: f64 = pt + pf;
    (total > 0.0).then(|| pt.max(pf) / total)
}

/// Majority-label frequency among parseable samples, never below 0.5.
pub fn confidence_from_samples(verdicts: &[Verdict]) -> f64 {
    let t = verdicts.iter().filter(|v| **v == Verdict::True).count();
    let f = verdicts.iter().filter(|v| **v == Verdict::Fake).count();
    if t + f == 0 {
        return 0.5;
    }
    (t.max(f) as f64 / (t + f) as f64).max(0.5)
}
