//! Post-hoc quality filter over collected sessions.

use serde::{Deserialize, Serialize};

use super::{Session, SessionStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRule {
    pub min_user_messages: usize,
    /// Minimum time from start to the last logged message.
    pub min_duration_ms: i64,
    /// Exclude sessions with messages logged after their deadline.
    pub enforce_deadline: bool,
}

impl Default for ExclusionRule {
    fn default() -> Self {
        Self { min_user_messages: 3, min_duration_ms: 5 * 60 * 1000, enforce_deadline: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MinimalInteraction,
    ShortDuration,
    TimeoutViolation,
    ManualFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedSession {
    pub session: Session,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExclusionOutcome {
    pub retained: Vec<Session>,
    pub excluded: Vec<ExcludedSession>,
}

/// First failing check, in order: manual flag, minimal interaction, short
/// duration, deadline violation.
pub fn exclusion_reason(session: &Session, rule: &ExclusionRule) -> Option<ExclusionReason> {
    if session.manual_flag.is_some() {
        return Some(ExclusionReason::ManualFlag);
    }
    if session.user_message_count() < rule.min_user_messages {
        return Some(ExclusionReason::MinimalInteraction);
    }
    if session.interaction_ms() < rule.min_duration_ms {
        return Some(ExclusionReason::ShortDuration);
    }
    if rule.enforce_deadline && session.messages.iter().any(|m| m.sent_at > session.deadline_at) {
        return Some(ExclusionReason::TimeoutViolation);
    }
    None
}

/// Partition sessions into retained and excluded, preserving input order.
/// Excluded sessions are returned with status `excluded`.
pub fn apply_exclusions(sessions: Vec<Session>, rule: &ExclusionRule) -> ExclusionOutcome {
    let mut out = ExclusionOutcome::default();
    for mut session in sessions {
        match exclusion_reason(&session, rule) {
            Some(reason) => {
                session.status = SessionStatus::Excluded;
                out.excluded.push(ExcludedSession { session, reason });
            }
            None => out.retained.push(session),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{Condition, PersonaId};
    use crate::session::{Message, Speaker, SESSION_SCHEMA_VERSION};

    fn session(user_msgs: usize, span_ms: i64) -> Session {
        let messages = (0..user_msgs)
            .map(|i| Message {
                message_id: format!("m{i}"),
                speaker: Speaker::User,
                persona_target: PersonaId::Divergent,
                text: "x".into(),
                sent_at: if user_msgs == 1 { span_ms } else { span_ms * i as i64 / (user_msgs as i64 - 1) },
                unanswered: false,
            })
            .collect();
        Session {
            schema_version: SESSION_SCHEMA_VERSION,
            session_id: "s".into(),
            condition: Condition::Treatment,
            task_statement: "t".into(),
            started_at: 0,
            deadline_at: 20 * 60 * 1000,
            button_order_seed: 0,
            status: SessionStatus::Submitted,
            messages,
            survey: None,
            manual_flag: None,
        }
    }

    #[test]
    fn empty_session_is_minimal_interaction() {
        let out = apply_exclusions(vec![session(0, 0)], &ExclusionRule::default());
        assert_eq!(out.excluded[0].reason, ExclusionReason::MinimalInteraction);
        assert_eq!(out.excluded[0].session.status, SessionStatus::Excluded);
    }

    #[test]
    fn adequate_session_is_retained() {
        let out = apply_exclusions(vec![session(5, 10 * 60 * 1000)], &ExclusionRule::default());
        assert_eq!(out.retained.len(), 1);
        assert!(out.excluded.is_empty());
    }

    #[test]
    fn each_reason_fires() {
        let rule = ExclusionRule::default();
        assert_eq!(exclusion_reason(&session(5, 60_000), &rule), Some(ExclusionReason::ShortDuration));
        assert_eq!(exclusion_reason(&session(5, 21 * 60 * 1000), &rule), Some(ExclusionReason::TimeoutViolation));
        let mut flagged = session(5, 10 * 60 * 1000);
        flagged.manual_flag = Some("content authenticity".into());
        assert_eq!(exclusion_reason(&flagged, &rule), Some(ExclusionReason::ManualFlag));
        let lax = ExclusionRule { enforce_deadline: false, ..rule };
        assert_eq!(exclusion_reason(&session(5, 21 * 60 * 1000), &lax), None);
    }
}
