//! Timed co-creation sessions: condition assignment, message posting with
//! persona routing, exclusion rules and JSONL interchange.

mod clock;
mod engine;
mod exclusion;
pub mod jsonl;
pub mod store;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::persona::{Condition, PersonaId};
use crate::survey::SurveyResponse;

pub use clock::{Clock, ManualClock, SystemClock};
pub use engine::{EngineSettings, SessionEngine};
pub use exclusion::{apply_exclusions, ExcludedSession, ExclusionOutcome, ExclusionReason, ExclusionRule};

/// Milliseconds since the Unix epoch, UTC.
pub type TimestampMs = i64;

pub const SESSION_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SESSION_LIMIT_MS: i64 = 20 * 60 * 1000;
pub const DEFAULT_TASK: &str = "How can we make libraries more attractive to young adults?";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session expired at {deadline_at}")]
    SessionExpired { deadline_at: TimestampMs },
    #[error("session is {0:?}, not active")]
    SessionClosed(SessionStatus),
    #[error("another message is already in flight for this session")]
    SessionBusy,
    #[error("message text is empty")]
    EmptyMessage,
    #[error("upstream model failure: {0}")]
    UpstreamFailure(#[source] GatewayError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("survey already submitted")]
    SurveyAlreadySubmitted,
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Submitted,
    TimedOut,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub message_id: String,
    pub speaker: Speaker,
    #[serde(rename = "persona")]
    pub persona_target: PersonaId,
    pub text: String,
    pub sent_at: TimestampMs,
    /// Set on a user message whose model call failed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unanswered: bool,
}

/// Vertical placement of the two send buttons, derived from the session's
/// `button_order_seed` (even seed: Taylor on top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ButtonOrder {
    TaylorTop,
    AlexTop,
}

impl ButtonOrder {
    pub fn from_seed(seed: u64) -> Self {
        if seed.is_multiple_of(2) {
            ButtonOrder::TaylorTop
        } else {
            ButtonOrder::AlexTop
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    pub session_id: String,
    pub condition: Condition,
    #[serde(rename = "task")]
    pub task_statement: String,
    pub started_at: TimestampMs,
    pub deadline_at: TimestampMs,
    pub button_order_seed: u64,
    pub status: SessionStatus,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<SurveyResponse>,
    /// Analyst-supplied exclusion note (e.g. content authenticity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_flag: Option<String>,
}

impl Session {
    pub fn user_messages(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(|m| m.speaker == Speaker::User)
    }

    pub fn user_message_count(&self) -> usize {
        self.user_messages().count()
    }

    pub fn button_order(&self) -> ButtonOrder {
        ButtonOrder::from_seed(self.button_order_seed)
    }

    /// Time from session start to the last logged message.
    pub fn interaction_ms(&self) -> i64 {
        self.messages.last().map_or(0, |m| m.sent_at - self.started_at)
    }

    pub fn next_message_id(&self) -> String {
        format!("m{:05}", self.messages.len() + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSettings {
    pub session_limit_ms: i64,
    pub task_statement: String,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            session_limit_ms: DEFAULT_SESSION_LIMIT_MS,
            task_statement: DEFAULT_TASK.to_string(),
        }
    }
}

/// Open a new session. The condition is a Bernoulli draw with
/// `treatment_probability`; the button-order seed is drawn from the same
/// stream afterwards, so a fixed `rng_seed` reproduces both.
pub fn create_session(
    settings: &SessionSettings,
    treatment_probability: f64,
    rng_seed: Option<u64>,
    now: TimestampMs,
) -> Result<Session, SessionError> {
    if !(0.0..=1.0).contains(&treatment_probability) {
        return Err(SessionError::InvalidArgument(format!(
            "treatment_probability must lie in [0, 1], got {treatment_probability}"
        )));
    }
    if settings.session_limit_ms <= 0 {
        return Err(SessionError::InvalidArgument("session limit must be positive".into()));
    }
    let mut rng = match rng_seed {
        Some(seed) => ChaCha8Rng::seed_from_u64(seed),
        None => ChaCha8Rng::from_os_rng(),
    };
    let condition = if rng.random_bool(treatment_probability) {
        Condition::Treatment
    } else {
        Condition::Control
    };
    let button_order_seed: u64 = rng.random();
    let session_id = uuid::Builder::from_random_bytes(rng.random()).into_uuid().to_string();
    Ok(Session {
        schema_version: SESSION_SCHEMA_VERSION,
        session_id,
        condition,
        task_statement: settings.task_statement.clone(),
        started_at: now,
        deadline_at: now + settings.session_limit_ms,
        button_order_seed,
        status: SessionStatus::Active,
        messages: Vec::new(),
        survey: None,
        manual_flag: None,
    })
}
