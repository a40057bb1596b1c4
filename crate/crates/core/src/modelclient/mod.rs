//! Language-model and embedding clients.
//!
//! [`CompletionClient`] wraps a [`CompletionBackend`] (HTTP provider or stub)
//! with the response cache, retry with exponential backoff, and a bound on
//! in-flight requests. In replay-only mode it has no backend at all and
//! serves the cache.

mod cache;
mod embed;
mod http;
mod stub;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use embed::{write_embeddings_file, EmbeddingProvider, EmbeddingRecord, HashEmbedding, PrecomputedEmbeddings};
pub use http::{HttpAdapter, HttpCompletionBackend, HttpEmbeddingProvider, HttpSettings};
pub use stub::{EmptyBackend, FnBackend, GoldEchoBackend, ScriptedBackend};

/// SHA-256 hex digest of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    model: String,
    prompt: String,
    decoding: Decoding,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, prompt: impl Into<String>, decoding: Decoding) -> Result<Self> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(Error::InvalidParam("prompt must not be empty".into()));
        }
        Ok(Self {
            model: model.into(),
            prompt,
            decoding,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn decoding(&self) -> Decoding {
        self.decoding
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub text: String,
    pub usage: Option<serde_json::Value>,
}

impl From<&str> for Completion {
    fn from(text: &str) -> Self {
        Self {
            text: text.to_owned(),
            usage: None,
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    /// Provider name used in cache keys and file names.
    fn provider(&self) -> String;

    fn complete(&self, request: &CompletionRequest) -> Result<Completion>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): `base · 2^attempt`,
    /// capped at `max_delay_ms`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Counting semaphore bounding concurrent provider calls.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.released.wait(n).unwrap();
        }
        *n += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.in_flight.lock().unwrap() -= 1;
        self.limiter.released.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub cache_hits: u64,
    /// Calls that reached the backend, retries included.
    pub backend_calls: u64,
    pub failures: u64,
}

impl ClientStats {
    pub fn hit_ratio(&self) -> f64 {
        let served = self.cache_hits + self.backend_calls;
        if served == 0 {
            0.0
        } else {
            self.cache_hits as f64 / served as f64
        }
    }
}

pub struct CompletionClient {
    provider: String,
    backend: Option<Arc<dyn CompletionBackend>>,
    cache: Option<Arc<ResponseCache>>,
    template_version: String,
    retry: RetryPolicy,
    limiter: ConcurrencyLimiter,
    cache_hits: AtomicU64,
    backend_calls: AtomicU64,
    failures: AtomicU64,
}

impl CompletionClient {
    pub fn new(backend: Arc<dyn CompletionBackend>, template_version: impl Into<String>) -> Self {
        Self {
            provider: backend.provider(),
            backend: Some(backend),
            cache: None,
            template_version: template_version.into(),
            retry: RetryPolicy::default(),
            limiter: ConcurrencyLimiter::new(4),
            cache_hits: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        }
    }

    /// A client that only answers from `cache`; misses are errors.
    pub fn replay_only(provider: impl Into<String>, cache: Arc<ResponseCache>, template_version: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            backend: None,
            cache: Some(cache),
            template_version: template_version.into(),
            retry: RetryPolicy::default(),
            limiter: ConcurrencyLimiter::new(1),
            cache_hits: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_concurrency(mut self, max: usize) -> Self {
        self.limiter = ConcurrencyLimiter::new(max);
        self
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    pub fn max_concurrency(&self) -> usize {
        self.limiter.max()
    }

    pub fn is_replay_only(&self) -> bool {
        self.backend.is_none()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
        }
    }

    pub fn key_for(&self, request: &CompletionRequest) -> String {
        cache_key(
            &self.provider,
            &request.model,
            &self.template_version,
            &request.prompt,
            &request.decoding,
        )
    }

    /// Returns the cached response when present, without touching the
    /// backend; otherwise calls the backend (retrying retriable failures)
    /// and records the response.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let key = self.key_for(request);
        if let Some(entry) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.response);
        }
        let Some(backend) = &self.backend else {
            return Err(Error::ReplayMiss { key });
        };
        let completion = self.call_with_retry(backend.as_ref(), request)?;
        if let Some(cache) = &self.cache {
            cache.put(CacheEntry::new(
                &self.provider,
                &request.model,
                &self.template_version,
                &request.prompt,
                &request.decoding,
                completion.text.clone(),
                completion.usage,
            ))?;
        }
        Ok(completion.text)
    }

    fn call_with_retry(&self, backend: &dyn CompletionBackend, request: &CompletionRequest) -> Result<Completion> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.backend_calls.fetch_add(1, Ordering::Relaxed);
                backend.complete(request)
            };
            match result {
                Ok(completion) => return Ok(completion),
                Err(err) => {
                    self.failures.fetch_add(1, Ordering::Relaxed);
                    if !err.is_retriable() || attempt >= self.retry.max_retries {
                        return Err(err);
                    }
                    let delay = self.retry.delay(attempt);
                    log::warn!("{}: {err}; retrying in {delay:?}", self.provider);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn request(prompt: &str) -> CompletionRequest {
        CompletionRequest::new("m", prompt, Decoding::default()).unwrap()
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    #[test]
    fn empty_prompt_is_rejected() {
        assert!(CompletionRequest::new("m", "", Decoding::default()).is_err());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay_ms: 100,
            max_delay_ms: 1000,
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(400));
        assert_eq!(p.delay(9), Duration::from_millis(1000));
        assert_eq!(p.delay(200), Duration::from_millis(1000));
    }

    #[test]
    fn warm_cache_serves_without_backend_calls() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let backend = Arc::new(FnBackend::new("stub", |r: &CompletionRequest| Ok(format!("echo {}", r.prompt()))));
        let client = CompletionClient::new(backend, "tpl").with_cache(cache.clone());
        let first = client.complete(&request("hello")).unwrap();
        assert_eq!(client.stats().backend_calls, 1);
        let second = client.complete(&request("hello")).unwrap();
        assert_eq!(first, second);
        assert_eq!(client.stats().backend_calls, 1);
        assert_eq!(client.stats().cache_hits, 1);

        let replay = CompletionClient::replay_only("stub", cache, "tpl");
        assert_eq!(replay.complete(&request("hello")).unwrap(), first);
        assert!(matches!(replay.complete(&request("other")), Err(Error::ReplayMiss { .. })));
        assert_eq!(replay.stats().backend_calls, 0);
    }

    #[test]
    fn retriable_failures_are_retried_then_surface() {
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let flaky = Arc::new(FnBackend::new("flaky", move |_: &CompletionRequest| {
            if seen.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(Error::provider("503", true))
            } else {
                Ok("ok".into())
            }
        }));
        let client = CompletionClient::new(flaky, "t").with_retry(fast_retry());
        assert_eq!(client.complete(&request("x")).unwrap(), "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let down = Arc::new(FnBackend::new("down", |_: &CompletionRequest| Err(Error::provider("503", true))));
        let client = CompletionClient::new(down, "t").with_retry(fast_retry());
        assert!(client.complete(&request("x")).is_err());
        assert_eq!(client.stats().backend_calls, 4);

        let fatal = Arc::new(FnBackend::new("fatal", |_: &CompletionRequest| Err(Error::provider("400", false))));
        let client = CompletionClient::new(fatal, "t").with_retry(fast_retry());
        assert!(client.complete(&request("x")).is_err());
        assert_eq!(client.stats().backend_calls, 1);
    }

    #[test]
    fn in_flight_requests_never_exceed_the_bound() {
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (c, p) = (current.clone(), peak.clone());
        let backend = Arc::new(FnBackend::new("slow", move |r: &CompletionRequest| {
            let now = c.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            c.fetch_sub(1, Ordering::SeqCst);
            Ok(r.prompt().to_owned())
        }));
        let client = CompletionClient::new(backend, "t").with_max_concurrency(3);
        std::thread::scope(|s| {
            for i in 0..24 {
                let client = &client;
                s.spawn(move || client.complete(&request(&format!("p{i}"))).unwrap());
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3, "peak {}", peak.load(Ordering::SeqCst));
        assert!(peak.load(Ordering::SeqCst) >= 2);
    }
}
