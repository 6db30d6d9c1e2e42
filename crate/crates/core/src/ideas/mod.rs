//! Two-stage idea pipeline: extract grounded idea records from a
//! participant's own messages, then group them into at most eight
//! categories.

pub mod prompts;

use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, GatewayError, LlmGateway, DEFAULT_CHAT_MODEL};
use crate::persona::{summarize_state, GenerationParams, PromptPayload, TranscriptEntry};
use crate::session::{Session, Speaker};

use prompts::{CATEGORY_TEMPLATE, EXTRACTION_TEMPLATE, REFORMAT_INSTRUCTION};

pub const MAX_CATEGORIES: usize = 8;
const FALLBACK_LABEL: &str = "other";

#[derive(Debug, Error)]
pub enum IdeaError {
    #[error("could not parse model output after a reformat retry: {0}")]
    ExtractionParseError(String),
    #[error("no ideas to categorize")]
    EmptyInput,
    #[error("upstream failure: {0}")]
    UpstreamFailure(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdeaRecord {
    pub idea_id: String,
    pub title: String,
    pub description: String,
    pub evidence_quotes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    pub member_idea_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategorySet {
    pub categories: Vec<Category>,
}

impl CategorySet {
    /// Checks the partition property against `ideas` and the size cap.
    pub fn check(&self, ideas: &[IdeaRecord]) -> Result<(), String> {
        if self.categories.len() > MAX_CATEGORIES {
            return Err(format!("{} categories", self.categories.len()));
        }
        let mut seen = HashSet::new();
        for c in &self.categories {
            if c.member_idea_ids.is_empty() {
                return Err(format!("category {:?} is empty", c.label));
            }
            for id in &c.member_idea_ids {
                if !seen.insert(id.as_str()) {
                    return Err(format!("idea {id} appears twice"));
                }
            }
        }
        let all: HashSet<&str> = ideas.iter().map(|i| i.idea_id.as_str()).collect();
        if seen != all {
            return Err("categories do not cover exactly the idea set".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub ideas: Vec<IdeaRecord>,
    /// Records rejected for failing the evidence check or reusing an id.
    pub dropped: usize,
    pub reformat_retries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub model: String,
    pub timeout: Duration,
    pub retries: u32,
    pub max_tokens: u32,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self { model: DEFAULT_CHAT_MODEL.to_string(), timeout: Duration::from_secs(120), retries: 2, max_tokens: 4000 }
    }
}

pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Every quote (whitespace-normalized) must occur inside a single user
/// message, and there must be at least one quote.
pub fn evidence_grounded(idea: &IdeaRecord, normalized_user_texts: &[String]) -> bool {
    !idea.evidence_quotes.is_empty()
        && idea.evidence_quotes.iter().all(|q| {
            let q = normalize_ws(q);
            !q.is_empty() && normalized_user_texts.iter().any(|t| t.contains(&q))
        })
}

fn parse_strict<T: serde::de::DeserializeOwned>(raw: &str) -> Result<Vec<T>, String> {
    serde_json::from_str::<Vec<T>>(raw.trim()).map_err(|e| e.to_string())
}

/// Ask once, and once more with a reformat instruction if the answer does
/// not parse.
async fn ask_json<T: serde::de::DeserializeOwned>(
    gateway: &LlmGateway,
    settings: &PipelineSettings,
    mut payload: PromptPayload,
    request_id: &str,
    validate: impl Fn(&[T]) -> Result<(), String>,
) -> Result<(Vec<T>, usize), IdeaError> {
    let mut last_err = String::new();
    for attempt in 0..2 {
        let req = ChatRequest {
            payload: payload.clone(),
            model_name: settings.model.clone(),
            request_id: format!("{request_id}#{attempt}"),
        };
        let raw = match gateway.complete_chat(&req, settings.timeout, settings.retries).await {
            Ok(raw) => raw,
            Err(GatewayError::InvalidResponse(e)) => {
                last_err = e;
                String::new()
            }
            Err(e) => return Err(e.into()),
        };
        if !raw.is_empty() {
            match parse_strict::<T>(&raw).and_then(|v| validate(&v).map(|_| v)) {
                Ok(v) => return Ok((v, attempt)),
                Err(e) => last_err = e,
            }
        }
        payload.recent_transcript.push(TranscriptEntry { speaker: Speaker::Assistant, persona_id: None, text: raw });
        payload.recent_transcript.push(TranscriptEntry {
            speaker: Speaker::User,
            persona_id: None,
            text: REFORMAT_INSTRUCTION.to_string(),
        });
    }
    Err(IdeaError::ExtractionParseError(format!("{request_id}: {last_err}")))
}

/// Stage 1: grounded idea records from the participant's own messages.
pub async fn extract_ideas(
    gateway: &LlmGateway,
    session: &Session,
    settings: &PipelineSettings,
) -> Result<Extraction, IdeaError> {
    let user: Vec<_> = session.user_messages().collect();
    if user.is_empty() {
        return Ok(Extraction { ideas: vec![], dropped: 0, reformat_retries: 0 });
    }
    let payload = PromptPayload {
        system_prompt: EXTRACTION_TEMPLATE.to_string(),
        state_summary: summarize_state(&session.messages, &session.task_statement),
        recent_transcript: user
            .iter()
            .map(|m| TranscriptEntry { speaker: Speaker::User, persona_id: Some(m.persona_target), text: m.text.clone() })
            .collect(),
        generation: GenerationParams { temperature: 0.0, max_tokens: settings.max_tokens },
    };
    let (raw, retries) =
        ask_json::<IdeaRecord>(gateway, settings, payload, &format!("{}:extract", session.session_id), |_| Ok(()))
            .await?;

    let texts: Vec<String> = user.iter().map(|m| normalize_ws(&m.text)).collect();
    let mut ids = HashSet::new();
    let mut ideas = Vec::new();
    let mut dropped = 0;
    for idea in raw {
        if idea.idea_id.trim().is_empty() || !evidence_grounded(&idea, &texts) || !ids.insert(idea.idea_id.clone()) {
            dropped += 1;
            continue;
        }
        ideas.push(idea);
    }
    if dropped > 0 {
        tracing::info!(session = %session.session_id, dropped, "dropped ungrounded idea records");
    }
    Ok(Extraction { ideas, dropped, reformat_retries: retries })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposedCategory {
    label: String,
    idea_ids: Vec<String>,
}

/// Stage 2: partition the ideas into at most [`MAX_CATEGORIES`] groups.
pub async fn induce_categories(
    gateway: &LlmGateway,
    participant_id: &str,
    ideas: &[IdeaRecord],
    settings: &PipelineSettings,
) -> Result<CategorySet, IdeaError> {
    if ideas.is_empty() {
        return Err(IdeaError::EmptyInput);
    }
    let listing = serde_json::to_string(ideas).expect("ideas serialize");
    let payload = PromptPayload {
        system_prompt: CATEGORY_TEMPLATE.to_string(),
        state_summary: summarize_state(&[], ""),
        recent_transcript: vec![TranscriptEntry { speaker: Speaker::User, persona_id: None, text: listing }],
        generation: GenerationParams { temperature: 0.0, max_tokens: settings.max_tokens },
    };
    let known: HashSet<&str> = ideas.iter().map(|i| i.idea_id.as_str()).collect();
    let (proposed, _) = ask_json::<ProposedCategory>(
        gateway,
        settings,
        payload,
        &format!("{participant_id}:categories"),
        |cats| match cats.iter().flat_map(|c| &c.idea_ids).find(|id| !known.contains(id.as_str())) {
            Some(id) => Err(format!("unknown idea id {id}")),
            None => Ok(()),
        },
    )
    .await?;
    let cats = proposed.into_iter().map(|c| Category { label: c.label, member_idea_ids: c.idea_ids }).collect();
    Ok(CategorySet { categories: normalize_categories(cats, ideas, MAX_CATEGORIES) })
}

/// Repair a proposed grouping into a partition of `ideas` with at most
/// `cap` categories. Repeated ids keep their first placement, uncovered
/// ideas go to an "other" category, categories with the same label
/// (case-insensitive) are combined, empty ones are dropped, and then the
/// smallest category is merged into its nearest neighbour by label edit
/// distance until the cap holds. Ties go to the lexicographically smaller
/// label.
pub fn normalize_categories(proposed: Vec<Category>, ideas: &[IdeaRecord], cap: usize) -> Vec<Category> {
    let cap = cap.max(1);
    let known: HashSet<&str> = ideas.iter().map(|i| i.idea_id.as_str()).collect();
    let mut placed: HashSet<String> = HashSet::new();
    let mut by_label: BTreeMap<String, Category> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();

    let mut add = |label: &str, ids: Vec<String>, placed: &mut HashSet<String>| {
        let key = label.trim().to_lowercase();
        let key = if key.is_empty() { FALLBACK_LABEL.to_string() } else { key };
        let entry = by_label.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Category { label: label.trim().to_string(), member_idea_ids: vec![] }
        });
        for id in ids {
            if known.contains(id.as_str()) && placed.insert(id.clone()) {
                entry.member_idea_ids.push(id);
            }
        }
    };
    for c in proposed {
        add(&c.label, c.member_idea_ids, &mut placed);
    }
    let leftover: Vec<String> =
        ideas.iter().map(|i| i.idea_id.clone()).filter(|id| !placed.contains(id)).collect();
    if !leftover.is_empty() {
        add(FALLBACK_LABEL, leftover, &mut placed);
    }

    let mut cats: Vec<Category> = order
        .into_iter()
        .filter_map(|k| by_label.remove(&k))
        .filter(|c| !c.member_idea_ids.is_empty())
        .collect();

    while cats.len() > cap {
        let smallest = (0..cats.len())
            .min_by(|&a, &b| {
                cats[a].member_idea_ids.len().cmp(&cats[b].member_idea_ids.len()).then_with(|| cats[a].label.cmp(&cats[b].label))
            })
            .expect("non-empty");
        let src = cats.remove(smallest);
        let src_label = src.label.to_lowercase();
        let target = (0..cats.len())
            .min_by_key(|&i| (strsim::levenshtein(&src_label, &cats[i].label.to_lowercase()), cats[i].label.clone()))
            .expect("at least one other category");
        cats[target].member_idea_ids.extend(src.member_idea_ids);
    }
    cats
}
