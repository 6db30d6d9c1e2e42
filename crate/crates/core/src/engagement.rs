//! Behavioral measures over user-message sequences: quarter segmentation,
//! question-mark statistics, persona switching and run lengths.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use coachlab_stats::ContingencyTable;

use crate::persona::PersonaId;
use crate::session::{Message, Session, Speaker};
use crate::survey::{trait_quartiles, SurveyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngagementError {
    #[error("no user messages fall in the requested scope")]
    EmptyScope,
    #[error("session has no user messages")]
    EmptySession,
    #[error("insufficient cohort: {0}")]
    InsufficientCohort(String),
}

impl From<SurveyError> for EngagementError {
    fn from(e: SurveyError) -> Self {
        EngagementError::InsufficientCohort(e.to_string())
    }
}

/// Quarter (1..=4) of the 1-based message `i` out of `n`: `ceil(4i / n)`.
pub fn quarter_of(i: usize, n: usize) -> u8 {
    debug_assert!(i >= 1 && i <= n);
    ((4 * i).div_ceil(n)) as u8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterSegmentation {
    /// `assignments[k]` is the quarter of user message `k + 1`.
    pub assignments: Vec<u8>,
}

impl QuarterSegmentation {
    pub fn sizes(&self) -> [usize; 4] {
        let mut s = [0; 4];
        for &q in &self.assignments {
            s[q as usize - 1] += 1;
        }
        s
    }
}

pub fn segment_quarters(n: usize) -> QuarterSegmentation {
    QuarterSegmentation { assignments: (1..=n).map(|i| quarter_of(i, n)).collect() }
}

/// Counts questions in a message.
pub trait QuestionDetector {
    fn count(&self, text: &str) -> usize;
}

/// Counts literal `?` and fullwidth `？` characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuestionMarks;

impl QuestionDetector for QuestionMarks {
    fn count(&self, text: &str) -> usize {
        text.chars().filter(|c| matches!(c, '?' | '？')).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub mean_qmarks_per_message: f64,
    pub pct_turns_with_question: f64,
    pub messages: usize,
    pub scope: Vec<u8>,
}

pub const DEFAULT_QUARTERS: [u8; 3] = [2, 3, 4];

/// Question statistics over the user messages of `messages` whose quarter
/// is in `quarters` and, if given, whose target is `persona`. Quarters are
/// assigned over the full user-message sequence before filtering.
pub fn question_stats(
    messages: &[Message],
    quarters: &[u8],
    persona: Option<PersonaId>,
) -> Result<QuestionStats, EngagementError> {
    question_stats_with(&QuestionMarks, messages, quarters, persona)
}

pub fn question_stats_with(
    detector: &dyn QuestionDetector,
    messages: &[Message],
    quarters: &[u8],
    persona: Option<PersonaId>,
) -> Result<QuestionStats, EngagementError> {
    let user: Vec<&Message> = messages.iter().filter(|m| m.speaker == Speaker::User).collect();
    let seg = segment_quarters(user.len());
    let (mut n, mut marks, mut with_q) = (0usize, 0usize, 0usize);
    for (m, q) in user.iter().zip(&seg.assignments) {
        if !quarters.contains(q) || persona.is_some_and(|p| p != m.persona_target) {
            continue;
        }
        let c = detector.count(&m.text);
        n += 1;
        marks += c;
        with_q += usize::from(c > 0);
    }
    if n == 0 {
        return Err(EngagementError::EmptyScope);
    }
    let scope: BTreeSet<u8> = quarters.iter().copied().collect();
    Ok(QuestionStats {
        mean_qmarks_per_message: marks as f64 / n as f64,
        pct_turns_with_question: 100.0 * with_q as f64 / n as f64,
        messages: n,
        scope: scope.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBehavior {
    pub messages_per_persona: BTreeMap<PersonaId, usize>,
    pub switch_count: usize,
    pub longest_run: BTreeMap<PersonaId, usize>,
    pub ending_persona: PersonaId,
}

impl SessionBehavior {
    pub fn total_messages(&self) -> usize {
        self.messages_per_persona.values().sum()
    }
}

pub fn behavior_of(targets: &[PersonaId]) -> Result<SessionBehavior, EngagementError> {
    let ending_persona = *targets.last().ok_or(EngagementError::EmptySession)?;
    let mut messages_per_persona: BTreeMap<PersonaId, usize> = PersonaId::ALL.iter().map(|p| (*p, 0)).collect();
    let mut longest_run = messages_per_persona.clone();
    let mut switch_count = 0;
    let mut run = 0;
    for (i, p) in targets.iter().enumerate() {
        *messages_per_persona.get_mut(p).expect("all personas present") += 1;
        if i > 0 && targets[i - 1] != *p {
            switch_count += 1;
            run = 0;
        }
        run += 1;
        let best = longest_run.get_mut(p).expect("all personas present");
        *best = (*best).max(run);
    }
    Ok(SessionBehavior { messages_per_persona, switch_count, longest_run, ending_persona })
}

pub fn session_behavior(session: &Session) -> Result<SessionBehavior, EngagementError> {
    let targets: Vec<PersonaId> = session.user_messages().map(|m| m.persona_target).collect();
    behavior_of(&targets)
}

/// Rows: bottom and top trait quartile. Columns: ending persona
/// (divergent, convergent). Participants without a score are skipped.
pub fn ending_persona_contingency(
    behaviors: &[(String, SessionBehavior)],
    trait_scores: &[(String, f64)],
) -> Result<ContingencyTable, EngagementError> {
    let ending: HashMap<&str, PersonaId> = behaviors.iter().map(|(id, b)| (id.as_str(), b.ending_persona)).collect();
    let joined: Vec<(String, f64)> =
        trait_scores.iter().filter(|(id, _)| ending.contains_key(id.as_str())).cloned().collect();
    if joined.len() < 4 {
        return Err(EngagementError::InsufficientCohort(format!("{} participants with trait scores", joined.len())));
    }
    let mut cells = [[0u64; 2]; 2];
    for (id, q) in trait_quartiles(&joined)? {
        let row = match q {
            1 => 0,
            4 => 1,
            _ => continue,
        };
        let col = match ending[id.as_str()] {
            PersonaId::Divergent => 0,
            PersonaId::Convergent => 1,
        };
        cells[row][col] += 1;
    }
    Ok(ContingencyTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use PersonaId::{Convergent as A, Divergent as D};

    fn user(texts: &[(&str, PersonaId)]) -> Vec<Message> {
        texts
            .iter()
            .enumerate()
            .map(|(i, (t, p))| Message {
                message_id: format!("m{i}"),
                speaker: Speaker::User,
                persona_target: *p,
                text: t.to_string(),
                sent_at: i as i64,
                unanswered: false,
            })
            .collect()
    }

    #[test]
    fn quarter_examples() {
        assert_eq!(segment_quarters(4).assignments, vec![1, 2, 3, 4]);
        assert_eq!(segment_quarters(1).assignments, vec![4]);
        assert_eq!(segment_quarters(10).sizes(), [2, 3, 2, 3]);
        assert_eq!(segment_quarters(10).assignments, vec![1, 1, 2, 2, 2, 3, 3, 4, 4, 4]);
        assert!(segment_quarters(0).assignments.is_empty());
    }

    #[test]
    fn question_counting() {
        let msgs = user(&[("What? How?", D), ("ok", D), ("Why？", A)]);
        let s = question_stats(&msgs, &[1, 2, 3, 4], None).unwrap();
        assert_abs_diff_eq!(s.mean_qmarks_per_message, 1.0);
        assert_abs_diff_eq!(s.pct_turns_with_question, 200.0 / 3.0, epsilon = 1e-12);
        let none = user(&[("a", D), ("b", D)]);
        let s = question_stats(&none, &[1, 2, 3, 4], None).unwrap();
        assert_eq!((s.mean_qmarks_per_message, s.pct_turns_with_question), (0.0, 0.0));
        assert_eq!(question_stats(&none, &[1], Some(A)), Err(EngagementError::EmptyScope));
    }

    #[test]
    fn persona_filter_applies_after_segmentation() {
        // n = 4: one message per quarter.
        let msgs = user(&[("??", D), ("?", A), ("no", D), ("x?", D)]);
        let s = question_stats(&msgs, &DEFAULT_QUARTERS, Some(D)).unwrap();
        assert_eq!(s.messages, 2);
        assert_abs_diff_eq!(s.mean_qmarks_per_message, 0.5);
        assert_abs_diff_eq!(s.pct_turns_with_question, 50.0);
    }

    #[test]
    fn behavior_examples() {
        let b = behavior_of(&[D, D, A]).unwrap();
        assert_eq!(b.switch_count, 1);
        assert_eq!((b.longest_run[&D], b.longest_run[&A]), (2, 1));
        assert_eq!(b.ending_persona, A);
        assert_eq!(behavior_of(&[A, A, A]).unwrap().switch_count, 0);
        assert_eq!(behavior_of(&[D, A, D, A, D, A]).unwrap().switch_count, 5);
        assert_eq!(behavior_of(&[]), Err(EngagementError::EmptySession));
    }

    #[test]
    fn contingency_from_quartiles() {
        // 64 participants; quartile 1 = scores 0..16, quartile 4 = 48..64.
        let mut behaviors = Vec::new();
        let mut scores = Vec::new();
        for i in 0..64usize {
            let id = format!("p{i:02}");
            let ending = match i {
                0..=13 => D,
                14..=15 => A,
                48..=53 => D,
                54..=63 => A,
                _ => if i % 2 == 0 { D } else { A },
            };
            behaviors.push((id.clone(), behavior_of(&[ending]).unwrap()));
            scores.push((id, 1.0 + i as f64 / 16.0));
        }
        let t = ending_persona_contingency(&behaviors, &scores).unwrap();
        assert_eq!(t.cells, [[14, 2], [6, 10]]);

        let all_div: Vec<_> = behaviors.iter().map(|(id, _)| (id.clone(), behavior_of(&[D]).unwrap())).collect();
        let t = ending_persona_contingency(&all_div, &scores).unwrap();
        assert_eq!((t.cells[0][1], t.cells[1][1]), (0, 0));
        assert!(ending_persona_contingency(&all_div[..3], &scores).is_err());
    }
}
