//! Deterministic offline provider used by tests and `--offline-stub` runs.
//!
//! Chat requests are answered from the payload alone: extraction and
//! category-induction prompts get rule-based JSON answers, persona prompts
//! get a canned reply. Embeddings are signed feature hashes of the word
//! tokens, so texts sharing vocabulary land close together.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatProvider, EmbeddingProvider, ProviderError};
use crate::ideas::prompts::{CATEGORY_TEMPLATE_ID, EXTRACTION_TEMPLATE_ID};
use crate::persona::PromptPayload;
use crate::session::Speaker;

pub const STUB_EMBEDDING_DIM: usize = 64;

/// Sentence openers the stub extractor treats as a proposal.
pub const PROPOSAL_CUES: [&str; 8] = [
    "we could",
    "what if we",
    "maybe we",
    "i propose",
    "how about",
    "let's",
    "another idea is to",
    "the library could",
];

const STOPWORDS: [&str; 24] = [
    "the", "and", "for", "with", "that", "this", "from", "into", "about", "their", "them", "they", "have",
    "more", "some", "every", "each", "where", "when", "what", "could", "would", "should", "also",
];

#[derive(Debug)]
pub struct OfflineStub {
    dim: usize,
    chat_calls: AtomicUsize,
    embed_calls: AtomicUsize,
}

impl Default for OfflineStub {
    fn default() -> Self {
        Self::with_dim(STUB_EMBEDDING_DIM)
    }
}

impl OfflineStub {
    pub fn with_dim(dim: usize) -> Self {
        Self { dim: dim.max(2), chat_calls: AtomicUsize::new(0), embed_calls: AtomicUsize::new(0) }
    }

    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> usize {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in content_words(text) {
            let h = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as usize % self.dim;
            let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            let h = Sha256::digest(text.as_bytes());
            v[h[0] as usize % self.dim] = 1.0;
        }
        v
    }
}

fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= 3 && !STOPWORDS.contains(&w.as_str()))
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split_inclusive(['.', '!', '?', '\n']).map(str::trim).filter(|s| !s.is_empty())
}

fn strip_cue(sentence: &str) -> Option<&str> {
    let lower = sentence.to_lowercase();
    PROPOSAL_CUES.iter().find_map(|cue| {
        if lower.starts_with(cue) && sentence.is_char_boundary(cue.len()) {
            Some(sentence[cue.len()..].trim())
        } else {
            None
        }
    })
}

/// One idea per distinct proposal sentence in the user's turns.
fn extract_reply(payload: &PromptPayload) -> String {
    let mut seen: Vec<String> = Vec::new();
    let mut ideas = Vec::new();
    for entry in payload.recent_transcript.iter().take_while(|e| e.speaker == Speaker::User) {
        for sentence in sentences(&entry.text) {
            let Some(rest) = strip_cue(sentence) else { continue };
            if rest.split_whitespace().count() < 3 {
                continue;
            }
            let key = sentence.to_lowercase();
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let title: Vec<&str> = rest
                .split_whitespace()
                .take(6)
                .map(|w| w.trim_end_matches(|c: char| c.is_ascii_punctuation()))
                .collect();
            ideas.push(json!({
                "idea_id": format!("I{}", ideas.len() + 1),
                "title": title.join(" "),
                "description": sentence,
                "evidence_quotes": [sentence],
            }));
        }
    }
    serde_json::Value::Array(ideas).to_string()
}

/// Groups ideas by the longest content word of their title.
fn category_reply(payload: &PromptPayload) -> Result<String, ProviderError> {
    let text = payload
        .recent_transcript
        .first()
        .map(|e| e.text.as_str())
        .ok_or_else(|| ProviderError::Permanent("category request without ideas".into()))?;
    let ideas: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| ProviderError::Permanent(format!("bad idea list: {e}")))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for idea in &ideas {
        let id = idea["idea_id"].as_str().unwrap_or_default().to_string();
        let title = idea["title"].as_str().unwrap_or_default();
        let label = content_words(title)
            .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
            .unwrap_or_else(|| "misc".to_string());
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push(id);
    }
    let cats: Vec<_> = order
        .into_iter()
        .map(|label| {
            let ids = groups.remove(&label).unwrap_or_default();
            json!({ "label": label, "idea_ids": ids })
        })
        .collect();
    Ok(serde_json::Value::Array(cats).to_string())
}

fn persona_reply(payload: &PromptPayload) -> String {
    let last = payload
        .recent_transcript
        .iter()
        .rev()
        .find(|e| e.speaker == Speaker::User)
        .map(|e| e.text.split_whitespace().take(8).collect::<Vec<_>>().join(" "))
        .unwrap_or_default();
    let n = payload.state_summary.idea_titles_so_far.len();
    if payload.generation.temperature >= 0.5 {
        format!("Building on \"{last}\": what else could make this surprising? ({n} ideas on the table)")
    } else {
        format!("On \"{last}\": which of the {n} ideas so far best fits the budget and audience?")
    }
}

#[async_trait]
impl ChatProvider for OfflineStub {
    async fn chat(&self, _model: &str, payload: &PromptPayload) -> Result<String, ProviderError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        let prompt = payload.system_prompt.as_str();
        if prompt.contains(EXTRACTION_TEMPLATE_ID) {
            Ok(extract_reply(payload))
        } else if prompt.contains(CATEGORY_TEMPLATE_ID) {
            category_reply(payload)
        } else {
            Ok(persona_reply(payload))
        }
    }
}

#[async_trait]
impl EmbeddingProvider for OfflineStub {
    async fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.embed_calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_are_deterministic_and_nonzero() {
        let stub = OfflineStub::default();
        let a = stub.embed_one("Host gaming nights in the study hall");
        assert_eq!(a, stub.embed_one("Host gaming nights in the study hall"));
        assert_eq!(a.len(), STUB_EMBEDDING_DIM);
        assert!(stub.embed_one("?!").iter().any(|x| *x != 0.0));
    }

    #[test]
    fn cue_detection() {
        assert_eq!(strip_cue("We could open a cafe."), Some("open a cafe."));
        assert_eq!(strip_cue("what if we opened later?"), Some("opened later?"));
        assert_eq!(strip_cue("Thanks!"), None);
    }
}
