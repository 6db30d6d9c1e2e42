//! The single boundary to the model provider: chat completions with
//! retry/backoff and text embeddings behind a persistent cache.

mod cache;
mod openai;
mod stub;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::persona::PromptPayload;

pub use cache::{CacheEntry, EmbeddingCache};
pub use openai::OpenAiProvider;
pub use stub::{OfflineStub, PROPOSAL_CUES, STUB_EMBEDDING_DIM};

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4.1";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-large";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    #[error("transient provider error: {0}")]
    Transient(String),
    #[error("provider rejected the request: {0}")]
    Permanent(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("upstream failure after {attempts} attempt(s): {last_error}")]
    UpstreamFailure { attempts: u32, last_error: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding cache error: {0}")]
    Cache(String),
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn chat(&self, model: &str, payload: &PromptPayload) -> Result<String, ProviderError>;
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    /// One vector per input text, in input order.
    async fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub payload: PromptPayload,
    pub model_name: String,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_text_hash: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Hex SHA-256 of a text; the embedding cache key.
pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewaySettings {
    pub max_in_flight: usize,
    /// First retry delay; doubles per attempt up to `max_backoff`.
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    /// Per-attempt timeout and retry budget used for embedding calls.
    pub embed_timeout: Duration,
    pub embed_retries: u32,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            embed_timeout: Duration::from_secs(60),
            embed_retries: 3,
        }
    }
}

pub struct LlmGateway {
    chat: Arc<dyn ChatProvider>,
    embedder: Arc<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
    limiter: Semaphore,
    settings: GatewaySettings,
}

impl LlmGateway {
    pub fn new(
        chat: Arc<dyn ChatProvider>,
        embedder: Arc<dyn EmbeddingProvider>,
        cache: EmbeddingCache,
        settings: GatewaySettings,
    ) -> Self {
        Self {
            chat,
            embedder,
            cache,
            limiter: Semaphore::new(settings.max_in_flight.max(1)),
            settings,
        }
    }

    /// Gateway over one [`OfflineStub`] with an in-memory cache.
    pub fn offline() -> Self {
        let stub = Arc::new(OfflineStub::default());
        Self::new(stub.clone(), stub, EmbeddingCache::in_memory(), GatewaySettings::default())
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.settings.base_backoff.saturating_mul(factor).min(self.settings.max_backoff)
    }

    async fn with_retries<T, F, Fut>(&self, what: &str, timeout: Duration, retries: u32, mut call: F) -> Result<T, GatewayError>
    where
        F: FnMut() -> Fut,
        Fut: std::future::Future<Output = Result<T, ProviderError>>,
    {
        if timeout.is_zero() {
            return Err(GatewayError::InvalidInput("timeout must be positive".into()));
        }
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire().await.expect("limiter never closed");
                tokio::time::timeout(timeout, call()).await
            };
            let err = match outcome {
                Ok(Ok(v)) => {
                    tracing::debug!(what, attempt, "provider call succeeded");
                    return Ok(v);
                }
                Ok(Err(ProviderError::Malformed(msg))) => return Err(GatewayError::InvalidResponse(msg)),
                Ok(Err(ProviderError::Permanent(msg))) => {
                    return Err(GatewayError::UpstreamFailure { attempts: attempt, last_error: msg })
                }
                Ok(Err(ProviderError::Transient(msg))) => msg,
                Err(_) => format!("timed out after {timeout:?}"),
            };
            tracing::warn!(what, attempt, error = %err, "provider call failed");
            if attempt > retries {
                return Err(GatewayError::UpstreamFailure { attempts: attempt, last_error: err });
            }
            tokio::time::sleep(self.backoff(attempt - 1)).await;
        }
    }

    /// Chat completion. Transient failures are retried up to `retries` times
    /// with exponential backoff; an empty reply is an `InvalidResponse`.
    pub async fn complete_chat(&self, req: &ChatRequest, timeout: Duration, retries: u32) -> Result<String, GatewayError> {
        if req.model_name.trim().is_empty() {
            return Err(GatewayError::InvalidInput("model_name is empty".into()));
        }
        let text = self
            .with_retries("chat", timeout, retries, || self.chat.chat(&req.model_name, &req.payload))
            .await?;
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidResponse(format!("empty reply for request {}", req.request_id)));
        }
        Ok(text)
    }

    /// Embed texts through the cache. Only texts missing from the cache are
    /// sent to the provider, in a single call.
    pub async fn embed_texts(&self, texts: &[String], model_name: &str) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidInput("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::InvalidInput(format!("text {i} is blank")));
        }
        let hashes: Vec<String> = texts.iter().map(|t| text_digest(t)).collect();

        let mut missing: Vec<usize> = Vec::new();
        for (i, h) in hashes.iter().enumerate() {
            if self.cache.get(model_name, h).is_none() && !missing.iter().any(|&j| hashes[j] == *h) {
                missing.push(i);
            }
        }

        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self
                .with_retries("embed", self.settings.embed_timeout, self.settings.embed_retries, || {
                    self.embedder.embed(model_name, &batch)
                })
                .await?;
            if vectors.len() != batch.len() {
                return Err(GatewayError::InvalidResponse(format!(
                    "expected {} embeddings, got {}",
                    batch.len(),
                    vectors.len()
                )));
            }
            let expected = self.cache.dim(model_name).unwrap_or(vectors[0].len());
            for v in &vectors {
                if v.len() != expected {
                    return Err(GatewayError::DimensionMismatch { expected, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(GatewayError::InvalidResponse("embedding has non-finite components".into()));
                }
            }
            let entries: Vec<CacheEntry> = missing
                .iter()
                .zip(vectors)
                .map(|(&i, values)| CacheEntry {
                    model: model_name.to_string(),
                    text_hash: hashes[i].clone(),
                    dim: values.len(),
                    values,
                })
                .collect();
            self.cache.insert_all(entries)?;
        }

        hashes
            .into_iter()
            .map(|h| {
                let values = self
                    .cache
                    .get(model_name, &h)
                    .ok_or_else(|| GatewayError::Cache(format!("entry {h} vanished")))?;
                Ok(EmbeddingVector { values, source_text_hash: h })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{summarize_state, GenerationParams, PromptPayload};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    fn request() -> ChatRequest {
        ChatRequest {
            payload: PromptPayload {
                system_prompt: "sys".into(),
                state_summary: summarize_state(&[], "task"),
                recent_transcript: vec![],
                generation: GenerationParams { temperature: 0.8, max_tokens: 10 },
            },
            model_name: "m".into(),
            request_id: "r1".into(),
        }
    }

    /// Fails with the scripted errors first, then answers "ok".
    struct Flaky {
        script: Mutex<Vec<ProviderError>>,
        calls: AtomicU32,
    }

    impl Flaky {
        fn new(mut errors: Vec<ProviderError>) -> Self {
            errors.reverse();
            Self { script: Mutex::new(errors), calls: AtomicU32::new(0) }
        }
    }

    #[async_trait]
    impl ChatProvider for Flaky {
        async fn chat(&self, _: &str, _: &PromptPayload) -> Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.script.lock().unwrap().pop() {
                Some(e) => Err(e),
                None => Ok("ok".into()),
            }
        }
    }

    fn gateway(chat: Arc<dyn ChatProvider>) -> LlmGateway {
        let settings = GatewaySettings {
            base_backoff: Duration::from_millis(1),
            max_backoff: Duration::from_millis(4),
            ..GatewaySettings::default()
        };
        LlmGateway::new(chat, Arc::new(OfflineStub::default()), EmbeddingCache::in_memory(), settings)
    }

    #[tokio::test]
    async fn retries_then_succeeds() {
        let flaky = Arc::new(Flaky::new(vec![
            ProviderError::Transient("503".into()),
            ProviderError::Transient("429".into()),
        ]));
        let gw = gateway(flaky.clone());
        let out = gw.complete_chat(&request(), Duration::from_secs(1), 3).await.unwrap();
        assert_eq!(out, "ok");
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn zero_retries_fails_fast() {
        let flaky = Arc::new(Flaky::new(vec![ProviderError::Transient("503".into())]));
        let gw = gateway(flaky.clone());
        let err = gw.complete_chat(&request(), Duration::from_secs(1), 0).await.unwrap_err();
        assert!(matches!(err, GatewayError::UpstreamFailure { attempts: 1, .. }));
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test]
    async fn permanent_errors_are_not_retried() {
        let flaky = Arc::new(Flaky::new(vec![ProviderError::Permanent("401".into())]));
        let gw = gateway(flaky.clone());
        assert!(gw.complete_chat(&request(), Duration::from_secs(1), 5).await.is_err());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
    }

    struct Empty;

    #[async_trait]
    impl ChatProvider for Empty {
        async fn chat(&self, _: &str, _: &PromptPayload) -> Result<String, ProviderError> {
            Ok("   ".into())
        }
    }

    #[tokio::test]
    async fn empty_reply_is_invalid() {
        let gw = gateway(Arc::new(Empty));
        assert!(matches!(
            gw.complete_chat(&request(), Duration::from_secs(1), 2).await,
            Err(GatewayError::InvalidResponse(_))
        ));
    }

    struct Slow;

    #[async_trait]
    impl ChatProvider for Slow {
        async fn chat(&self, _: &str, _: &PromptPayload) -> Result<String, ProviderError> {
            tokio::time::sleep(Duration::from_secs(5)).await;
            Ok("late".into())
        }
    }

    #[tokio::test]
    async fn timeouts_count_as_transient() {
        let gw = gateway(Arc::new(Slow));
        let err = gw.complete_chat(&request(), Duration::from_millis(10), 1).await.unwrap_err();
        assert!(matches!(err, GatewayError::UpstreamFailure { attempts: 2, .. }));
    }

    #[tokio::test]
    async fn stub_echo_contract() {
        let stub = Arc::new(OfflineStub::default());
        let gw = gateway(stub.clone());
        let req = request();
        let direct = stub.chat("m", &req.payload).await.unwrap();
        assert_eq!(gw.complete_chat(&req, Duration::from_secs(1), 0).await.unwrap(), direct);
    }

    #[tokio::test]
    async fn embed_rejects_bad_input() {
        let gw = LlmGateway::offline();
        assert!(gw.embed_texts(&[], "e").await.is_err());
        assert!(gw.embed_texts(&["a".into(), "  ".into()], "e").await.is_err());
    }
}
