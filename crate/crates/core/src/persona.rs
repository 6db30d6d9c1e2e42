//! Persona definitions and per-call prompt payloads.
//!
//! Every model call carries three parts: the persona's static system prompt,
//! a JSON summary of the conversation so far, and a bounded window of the
//! most recent exchanges. All functions here are pure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{Message, Speaker};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_MAX_TOKENS: u32 = 800;
pub const DIVERGENT_TEMPERATURE: f64 = 0.8;
pub const CONVERGENT_TEMPERATURE: f64 = 0.3;
/// Provider default; used for the control-condition baseline.
pub const BASELINE_TEMPERATURE: f64 = 1.0;

/// User messages at least this long contribute an idea title to the state summary.
const IDEA_TITLE_MIN_CHARS: usize = 40;
const IDEA_TITLE_MAX_WORDS: usize = 8;
const MAX_IDEA_TITLES: usize = 20;
const MAX_OPEN_THREADS: usize = 3;
const OPEN_THREAD_MAX_WORDS: usize = 12;

const DIVERGENT_PROMPT: &str = "You are Taylor, a creative coach who helps the user explore. \
Generate many varied possibilities, including unusual and playful ones. \
Pose expanding questions that open new directions instead of closing them. \
Defer judgment: do not rank, criticize or pick a winner. \
Build on the user's ideas and keep the space wide. Keep replies concise.";

const CONVERGENT_PROMPT: &str = "You are Alex, an analytical coach who helps the user decide. \
Evaluate the options on the table against clear criteria such as impact, feasibility and cost. \
Prioritize, structure the strongest options into concrete steps, and point out risks. \
Narrow toward a committed solution rather than adding new directions. Keep replies concise.";

const BASELINE_PROMPT: &str = "You are a helpful assistant.";

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("persona config parse error: {0}")]
    Parse(String),
    #[error("invalid persona config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaId {
    Divergent,
    Convergent,
}

impl PersonaId {
    pub const ALL: [PersonaId; 2] = [PersonaId::Divergent, PersonaId::Convergent];

    pub fn as_str(self) -> &'static str {
        match self {
            PersonaId::Divergent => "divergent",
            PersonaId::Convergent => "convergent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Treatment,
    Control,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Treatment => "treatment",
            Condition::Control => "control",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Condition::Treatment => Condition::Control,
            Condition::Control => Condition::Treatment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// Pushes toward breadth and variation.
    Envelope,
    /// Pushes toward evaluation and a committed answer.
    Structured,
    /// Unmodified assistant (control baseline).
    Neutral,
}

/// Generation settings and prompt for one persona. `persona_id` is `None`
/// for the control baseline, which serves both buttons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaConfig {
    pub persona_id: Option<PersonaId>,
    pub display_name: String,
    pub system_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub style: PromptStyle,
}

impl PersonaConfig {
    pub fn default_for(persona: PersonaId) -> Self {
        match persona {
            PersonaId::Divergent => Self {
                persona_id: Some(persona),
                display_name: "Taylor".into(),
                system_prompt: DIVERGENT_PROMPT.into(),
                temperature: DIVERGENT_TEMPERATURE,
                max_tokens: DEFAULT_MAX_TOKENS,
                style: PromptStyle::Envelope,
            },
            PersonaId::Convergent => Self {
                persona_id: Some(persona),
                display_name: "Alex".into(),
                system_prompt: CONVERGENT_PROMPT.into(),
                temperature: CONVERGENT_TEMPERATURE,
                max_tokens: DEFAULT_MAX_TOKENS,
                style: PromptStyle::Structured,
            },
        }
    }

    pub fn baseline() -> Self {
        Self {
            persona_id: None,
            display_name: "Assistant".into(),
            system_prompt: BASELINE_PROMPT.into(),
            temperature: BASELINE_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            style: PromptStyle::Neutral,
        }
    }

    fn validate(&self, name: &str) -> Result<(), PersonaError> {
        if self.system_prompt.trim().is_empty() {
            return Err(PersonaError::Invalid(format!("{name}.system_prompt is empty")));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(PersonaError::Invalid(format!(
                "{name}.temperature must lie in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(PersonaError::Invalid(format!("{name}.max_tokens must be positive")));
        }
        Ok(())
    }
}

/// The two personas plus the control baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaSet {
    pub divergent: PersonaConfig,
    pub convergent: PersonaConfig,
    pub baseline: PersonaConfig,
    pub transcript_window: usize,
}

impl Default for PersonaSet {
    fn default() -> Self {
        Self {
            divergent: PersonaConfig::default_for(PersonaId::Divergent),
            convergent: PersonaConfig::default_for(PersonaId::Convergent),
            baseline: PersonaConfig::baseline(),
            transcript_window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonaOverride {
    display_name: Option<String>,
    temperature: Option<f64>,
    system_prompt: Option<String>,
    max_tokens: Option<u32>,
}

impl PersonaOverride {
    fn apply(self, cfg: &mut PersonaConfig) {
        if let Some(v) = self.display_name {
            cfg.display_name = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.system_prompt {
            cfg.system_prompt = v;
        }
        if let Some(v) = self.max_tokens {
            cfg.max_tokens = v;
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonaFile {
    transcript_window: Option<usize>,
    #[serde(default)]
    divergent: PersonaOverride,
    #[serde(default)]
    convergent: PersonaOverride,
    #[serde(default)]
    baseline: PersonaOverride,
}

impl PersonaSet {
    /// Parse a TOML persona document. Missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, PersonaError> {
        let file: PersonaFile = toml::from_str(text).map_err(|e| PersonaError::Parse(e.to_string()))?;
        let mut set = PersonaSet::default();
        if let Some(w) = file.transcript_window {
            set.transcript_window = w;
        }
        file.divergent.apply(&mut set.divergent);
        file.convergent.apply(&mut set.convergent);
        file.baseline.apply(&mut set.baseline);
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if self.transcript_window == 0 {
            return Err(PersonaError::Invalid("transcript_window must be at least 1".into()));
        }
        self.divergent.validate("divergent")?;
        self.convergent.validate("convergent")?;
        self.baseline.validate("baseline")
    }

    /// Treatment routes each button to its own persona; control sends both
    /// buttons to the same baseline.
    pub fn resolve(&self, condition: Condition, selected: PersonaId) -> &PersonaConfig {
        match (condition, selected) {
            (Condition::Control, _) => &self.baseline,
            (Condition::Treatment, PersonaId::Divergent) => &self.divergent,
            (Condition::Treatment, PersonaId::Convergent) => &self.convergent,
        }
    }
}

/// [`PersonaSet::resolve`] over the built-in defaults.
pub fn resolve_persona(condition: Condition, selected: PersonaId) -> PersonaConfig {
    PersonaSet::default().resolve(condition, selected).clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationStateSummary {
    pub task_statement: String,
    pub turn_count: usize,
    pub idea_titles_so_far: Vec<String>,
    pub last_persona: Option<PersonaId>,
    pub open_threads: Vec<String>,
}

impl ConversationStateSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn first_clause(text: &str) -> &str {
    let end = text
        .find(['.', '!', '?', '？', ';', ':', ',', '\n'])
        .unwrap_or(text.len());
    text[..end].trim()
}

/// Deterministic, model-free summary of the conversation so far.
pub fn summarize_state(messages: &[Message], task: &str) -> ConversationStateSummary {
    let user: Vec<&Message> = messages.iter().filter(|m| m.speaker == Speaker::User).collect();

    let mut titles: Vec<String> = Vec::new();
    for m in &user {
        if m.text.trim().chars().count() < IDEA_TITLE_MIN_CHARS {
            continue;
        }
        let clause = first_clause(m.text.trim());
        // A message that opens with a question is not taken as an idea.
        if m.text.trim()[clause.len()..].trim_start().starts_with(['?', '？']) {
            continue;
        }
        let title = first_words(clause, IDEA_TITLE_MAX_WORDS);
        if !title.is_empty() && !titles.iter().any(|t| t.eq_ignore_ascii_case(&title)) {
            titles.push(title);
        }
    }
    if titles.len() > MAX_IDEA_TITLES {
        titles.drain(..titles.len() - MAX_IDEA_TITLES);
    }

    let mut threads: Vec<String> = Vec::new();
    'outer: for m in user.iter().rev() {
        let questions: Vec<&str> = m
            .text
            .split_inclusive(['?', '？'])
            .filter(|s| s.ends_with(['?', '？']))
            .collect();
        for q in questions.iter().rev() {
            let q = q.trim_start_matches(|c: char| matches!(c, '.' | '!' | ';' | ',') || c.is_whitespace());
            let phrase = first_words(q, OPEN_THREAD_MAX_WORDS);
            if !phrase.is_empty() {
                threads.push(phrase);
            }
            if threads.len() == MAX_OPEN_THREADS {
                break 'outer;
            }
        }
    }
    threads.reverse();

    ConversationStateSummary {
        task_statement: task.to_string(),
        turn_count: user.len(),
        idea_titles_so_far: titles,
        last_persona: user.last().map(|m| m.persona_target),
        open_threads: threads,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub persona_id: Option<PersonaId>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub system_prompt: String,
    pub state_summary: ConversationStateSummary,
    pub recent_transcript: Vec<TranscriptEntry>,
    pub generation: GenerationParams,
}

impl PromptPayload {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }
}

/// Group messages into exchanges: each user message opens one, assistant
/// replies attach to the open exchange.
pub fn exchanges(messages: &[Message]) -> Vec<&[Message]> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, m) in messages.iter().enumerate() {
        if m.speaker == Speaker::User && i > start {
            out.push(&messages[start..i]);
            start = i;
        }
    }
    if start < messages.len() {
        out.push(&messages[start..]);
    }
    out
}

/// Assemble the payload for one model call. The transcript holds the last
/// `window` exchanges (a window of 0 is treated as 1).
pub fn build_payload(
    config: &PersonaConfig,
    summary: &ConversationStateSummary,
    messages: &[Message],
    window: usize,
) -> PromptPayload {
    let groups = exchanges(messages);
    let keep = window.max(1).min(groups.len());
    let recent_transcript = groups[groups.len() - keep..]
        .iter()
        .flat_map(|g| g.iter())
        .map(|m| TranscriptEntry {
            speaker: m.speaker,
            persona_id: Some(m.persona_target),
            text: m.text.clone(),
        })
        .collect();
    PromptPayload {
        system_prompt: config.system_prompt.clone(),
        state_summary: summary.clone(),
        recent_transcript,
        generation: GenerationParams {
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        },
    }
}
