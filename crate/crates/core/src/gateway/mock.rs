//! Deterministic in-process backend for tests and offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatReply, ChatRequest};
use crate::error::{Error, Result};

type Responder = dyn Fn(&ChatRequest) -> String + Send + Sync;
type LogprobFn = dyn Fn(&ChatRequest) -> Vec<(String, f64)> + Send + Sync;

/// A pure-function chat backend with optional latency, injected failures and
/// an in-flight counter.
pub struct MockBackend {
    responder: Arc<Responder>,
    logprobs: Option<Arc<LogprobFn>>,
    embed_dim: usize,
    delay: Duration,
    transient_failures: AtomicUsize,
    always_fail: bool,
    calls: AtomicUsize,
    inflight: AtomicUsize,
    max_seen: AtomicUsize,
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn coin(bytes: [u8; 32]) -> &'static str {
    if bytes[0] & 1 == 0 {
        "true"
    } else {
        "fake"
    }
}

impl MockBackend {
    pub fn from_fn(f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self {
            responder: Arc::new(f),
            logprobs: None,
            embed_dim: 64,
            delay: Duration::ZERO,
            transient_failures: AtomicUsize::new(0),
            always_fail: false,
            calls: AtomicUsize::new(0),
            inflight: AtomicUsize::new(0),
            max_seen: AtomicUsize::new(0),
        }
    }

    /// Verdict is a hash of the whole prompt and seed.
    pub fn hashing(salt: u64) -> Self {
        Self::from_fn(move |r| {
            coin(digest(&[
                r.system.as_bytes(),
                r.user.as_bytes(),
                &r.seed.to_le_bytes(),
                &salt.to_le_bytes(),
            ]))
            .to_string()
        })
    }

    /// Verdict depends only on the claim question and seed, never on the persona.
    pub fn demographics_blind(salt: u64) -> Self {
        Self::from_fn(move |r| {
            coin(digest(&[r.user.as_bytes(), &r.seed.to_le_bytes(), &salt.to_le_bytes()]))
                .to_string()
        })
    }

    /// Replies `present` when the system text contains `token`, else `absent`.
    pub fn keyed_on(token: &str, present: &str, absent: &str) -> Self {
        let (token, present, absent) = (token.to_string(), present.to_string(), absent.to_string());
        Self::from_fn(move |r| {
            if r.system.contains(&token) {
                present.clone()
            } else {
                absent.clone()
            }
        })
    }

    /// Adds first-token logprobs; `p_true` maps a request to P(true), the
    /// remaining mass going to `fake`.
    pub fn with_logprobs(mut self, p_true: impl Fn(&ChatRequest) -> f64 + Send + Sync + 'static) -> Self {
        self.logprobs = Some(Arc::new(move |r| {
            let p = p_true(r).clamp(1e-12, 1.0 - 1e-12);
            vec![("true".to_string(), p.ln()), ("fake".to_string(), (1.0 - p).ln())]
        }));
        self
    }

    pub fn with_embed_dim(mut self, dim: usize) -> Self {
        self.embed_dim = dim;
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// The next `n` chat calls fail with a transport error.
    pub fn with_transient_failures(self, n: usize) -> Self {
        self.transient_failures.store(n, Ordering::SeqCst);
        self
    }

    pub fn always_failing(mut self) -> Self {
        self.always_fail = true;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Largest number of concurrent chat calls observed.
    pub fn max_observed_inflight(&self) -> usize {
        self.max_seen.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatReply> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_seen.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let fail = self.always_fail
            || self
                .transient_failures
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok();
        let out = if fail {
            Err(Error::Transport {
                fingerprint: String::new(),
                message: "mock transport failure".into(),
            })
        } else {
            Ok(ChatReply {
                content: (self.responder)(req),
                top_logprobs: match (&self.logprobs, req.top_logprobs) {
                    (Some(f), Some(_)) => Some(f(req)),
                    _ => None,
                },
            })
        };
        self.inflight.fetch_sub(1, Ordering::SeqCst);
        out
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| hashed_embedding(t, self.embed_dim)).collect())
    }

    fn supports_logprobs(&self) -> bool {
        self.logprobs.is_some()
    }
}

/// Unit-norm signed feature hashing over lowercase words and word bigrams.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0f32; dim.max(1)];
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut feats: Vec<String> = words.clone();
    feats.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    if feats.is_empty() {
        feats.push(text.to_string());
    }
    for f in &feats {
        let d = digest(&[f.as_bytes()]);
        let idx = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as usize % v.len();
        v[idx] += if d[8] & 1 == 0 { 1.0 } else { -1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_are_deterministic() {
        let a = hashed_embedding("abc", 64);
        assert_eq!(a, hashed_embedding("abc", 64));
        assert_eq!(a.len(), 64);
        assert_ne!(a, hashed_embedding("abd", 64));
    }
}
