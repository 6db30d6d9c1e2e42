//! OpenAI-compatible HTTP provider (`/chat/completions`, `/embeddings`).

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, EmbeddingProvider, ProviderError};
use crate::persona::PromptPayload;
use crate::session::Speaker;

pub struct OpenAiProvider {
    client: reqwest::Client,
    base_url: String,
    api_key: String,
}

impl OpenAiProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        }
    }

    async fn post(&self, path: &str, body: serde_json::Value) -> Result<String, ProviderError> {
        let resp = self
            .client
            .post(format!("{}{}", self.base_url, path))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| ProviderError::Transient(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(ProviderError::Transient(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Permanent(format!("{status}: {text}")));
        }
        Ok(text)
    }
}

/// Flatten a payload into chat messages: the system prompt with the state
/// summary appended, then the transcript window.
pub fn chat_messages(payload: &PromptPayload) -> Vec<serde_json::Value> {
    let mut messages = vec![json!({
        "role": "system",
        "content": format!(
            "{}\n\nConversation state (JSON):\n{}",
            payload.system_prompt,
            payload.state_summary.to_json()
        ),
    })];
    for entry in &payload.recent_transcript {
        let role = match entry.speaker {
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        };
        messages.push(json!({ "role": role, "content": entry.text }));
    }
    messages
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[async_trait]
impl ChatProvider for OpenAiProvider {
    async fn chat(&self, model: &str, payload: &PromptPayload) -> Result<String, ProviderError> {
        let body = json!({
            "model": model,
            "messages": chat_messages(payload),
            "temperature": payload.generation.temperature,
            "max_tokens": payload.generation.max_tokens,
        });
        let raw = self.post("/chat/completions", body).await?;
        let parsed: ChatResponse = serde_json::from_str(&raw).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("no choices in reply".into()))
    }
}

#[async_trait]
impl EmbeddingProvider for OpenAiProvider {
    async fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let raw = self.post("/embeddings", json!({ "model": model, "input": texts })).await?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_str(&raw).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        parsed.data.sort_by_key(|d| d.index);
        if parsed.data.len() != texts.len() || parsed.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(ProviderError::Malformed("embedding indices do not cover the input".into()));
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}
