use std::sync::Arc;
use std::time::Duration;

use super::{Clock, Message, Session, SessionError, SessionStatus, Speaker, TimestampMs};
use crate::gateway::{ChatRequest, LlmGateway, DEFAULT_CHAT_MODEL};
use crate::persona::{build_payload, summarize_state, PersonaId, PersonaSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    pub chat_model: String,
    pub chat_timeout: Duration,
    pub chat_retries: u32,
    /// Replies stamped later than `deadline_at + grace_ms` are discarded.
    pub grace_ms: i64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            chat_model: DEFAULT_CHAT_MODEL.to_string(),
            chat_timeout: Duration::from_secs(60),
            chat_retries: 2,
            grace_ms: 0,
        }
    }
}

/// Routes user messages to the configured personas and records both sides.
pub struct SessionEngine {
    personas: PersonaSet,
    gateway: Arc<LlmGateway>,
    clock: Arc<dyn Clock>,
    settings: EngineSettings,
}

impl SessionEngine {
    pub fn new(personas: PersonaSet, gateway: Arc<LlmGateway>, clock: Arc<dyn Clock>, settings: EngineSettings) -> Self {
        Self { personas, gateway, clock, settings }
    }

    pub fn personas(&self) -> &PersonaSet {
        &self.personas
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Mark an active session past its deadline as timed out. Returns whether
    /// the status changed.
    pub fn expire_if_due(&self, session: &mut Session, now: TimestampMs) -> bool {
        if session.status == SessionStatus::Active && now > session.deadline_at {
            session.status = SessionStatus::TimedOut;
            true
        } else {
            false
        }
    }

    /// Append the user's message, call the model with the resolved persona
    /// and append its reply. On success both messages are appended; on
    /// upstream failure only the user message, flagged `unanswered`; on
    /// expiry nothing is appended and the session is marked timed out.
    pub async fn post_message(
        &self,
        session: &mut Session,
        persona: PersonaId,
        text: &str,
        now: TimestampMs,
    ) -> Result<Message, SessionError> {
        if session.status != SessionStatus::Active {
            return Err(SessionError::SessionClosed(session.status));
        }
        if self.expire_if_due(session, now) {
            return Err(SessionError::SessionExpired { deadline_at: session.deadline_at });
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyMessage);
        }

        let last_at = session.messages.last().map_or(session.started_at, |m| m.sent_at);
        let mut user = Message {
            message_id: session.next_message_id(),
            speaker: Speaker::User,
            persona_target: persona,
            text: text.to_string(),
            sent_at: now.max(last_at),
            unanswered: false,
        };

        let mut history = session.messages.clone();
        history.push(user.clone());
        let config = self.personas.resolve(session.condition, persona);
        let summary = summarize_state(&history, &session.task_statement);
        let payload = build_payload(config, &summary, &history, self.personas.transcript_window);
        let request = ChatRequest {
            payload,
            model_name: self.settings.chat_model.clone(),
            request_id: format!("{}:{}", session.session_id, user.message_id),
        };

        match self
            .gateway
            .complete_chat(&request, self.settings.chat_timeout, self.settings.chat_retries)
            .await
        {
            Ok(reply) => {
                let reply_at = self.clock.now_ms().max(user.sent_at);
                if reply_at > session.deadline_at + self.settings.grace_ms {
                    user.unanswered = true;
                    session.messages.push(user);
                    session.status = SessionStatus::TimedOut;
                    return Err(SessionError::SessionExpired { deadline_at: session.deadline_at });
                }
                let assistant = Message {
                    message_id: format!("m{:05}", session.messages.len() + 2),
                    speaker: Speaker::Assistant,
                    persona_target: persona,
                    text: reply,
                    sent_at: reply_at,
                    unanswered: false,
                };
                session.messages.push(user);
                session.messages.push(assistant.clone());
                Ok(assistant)
            }
            Err(e) => {
                user.unanswered = true;
                session.messages.push(user);
                Err(SessionError::UpstreamFailure(e))
            }
        }
    }
}
