//! Append-only per-session event logs with an in-memory index.
//!
//! Each session owns `<dir>/<session_id>.events.jsonl`. Every state change
//! is one JSON line written with a single `write_all` and synced, so a
//! crash can leave at most one torn trailing line, which replay skips.
//! A user message and its reply travel in the same `exchange` event.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};

use super::jsonl::{write_sessions, SessionFilter};
use super::{Message, Session, SessionError, SessionStatus, Speaker, TimestampMs};
use crate::survey::SurveyResponse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { session: Session },
    Exchange { user: Message, assistant: Option<Message> },
    Status { status: SessionStatus },
    Survey { survey: SurveyResponse, status: SessionStatus },
    Flagged { note: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at: TimestampMs,
    #[serde(flatten)]
    pub event: SessionEvent,
}

fn apply(session: &mut Option<Session>, event: SessionEvent) -> Result<(), String> {
    match event {
        SessionEvent::Created { session: s } => {
            *session = Some(s);
            return Ok(());
        }
        _ if session.is_none() => return Err("event before session creation".into()),
        _ => {}
    }
    let s = session.as_mut().expect("checked above");
    match event {
        SessionEvent::Created { .. } => unreachable!(),
        SessionEvent::Exchange { user, assistant } => {
            s.messages.push(user);
            s.messages.extend(assistant);
        }
        SessionEvent::Status { status } => s.status = status,
        SessionEvent::Survey { survey, status } => {
            s.survey = Some(survey);
            s.status = status;
        }
        SessionEvent::Flagged { note } => s.manual_flag = note,
    }
    Ok(())
}

/// Events that turn `old` into `new`. Messages must only have been appended.
fn diff(old: &Session, new: &Session) -> Result<Vec<SessionEvent>, SessionError> {
    if new.messages.len() < old.messages.len() || new.messages[..old.messages.len()] != old.messages[..] {
        return Err(SessionError::StorageFailure("message log is append-only".into()));
    }
    let mut events = Vec::new();
    let mut added = new.messages[old.messages.len()..].iter().peekable();
    while let Some(m) = added.next() {
        if m.speaker != Speaker::User {
            return Err(SessionError::StorageFailure("assistant message without a user message".into()));
        }
        let assistant = added.next_if(|n| n.speaker == Speaker::Assistant).cloned();
        events.push(SessionEvent::Exchange { user: m.clone(), assistant });
    }
    if new.manual_flag != old.manual_flag {
        events.push(SessionEvent::Flagged { note: new.manual_flag.clone() });
    }
    match (&old.survey, &new.survey) {
        (None, Some(survey)) => events.push(SessionEvent::Survey { survey: survey.clone(), status: new.status }),
        (Some(_), None) => return Err(SessionError::StorageFailure("survey cannot be removed".into())),
        _ if new.status != old.status => events.push(SessionEvent::Status { status: new.status }),
        _ => {}
    }
    Ok(events)
}

pub struct Slot {
    session: Session,
    seq: u64,
}

/// Exclusive access to one session. Changes made through [`commit`](Self::commit)
/// are persisted before the in-memory copy is updated.
pub struct SessionLease {
    guard: OwnedMutexGuard<Slot>,
    path: Option<PathBuf>,
}

impl SessionLease {
    pub fn session(&self) -> &Session {
        &self.guard.session
    }

    pub fn commit(&mut self, updated: Session, at: TimestampMs) -> Result<(), SessionError> {
        if updated.session_id != self.guard.session.session_id || updated.condition != self.guard.session.condition {
            return Err(SessionError::StorageFailure("session id and condition are immutable".into()));
        }
        let events = diff(&self.guard.session, &updated)?;
        if let Some(path) = &self.path {
            let mut seq = self.guard.seq;
            for event in events {
                seq += 1;
                append(path, &EventRecord { seq, at, event })?;
            }
            self.guard.seq = seq;
        }
        self.guard.session = updated;
        Ok(())
    }
}

fn append(path: &Path, record: &EventRecord) -> Result<(), SessionError> {
    let mut line = serde_json::to_string(record).map_err(|e| SessionError::StorageFailure(e.to_string()))?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| SessionError::StorageFailure(format!("{}: {e}", path.display())))?;
    file.write_all(line.as_bytes())
        .and_then(|_| file.sync_data())
        .map_err(|e| SessionError::StorageFailure(format!("{}: {e}", path.display())))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct SessionStore {
    dir: Option<PathBuf>,
    index: RwLock<BTreeMap<String, Arc<Mutex<Slot>>>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self { dir: None, index: RwLock::new(BTreeMap::new()) }
    }

    /// Open a log directory, replaying every session log in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, SessionError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| SessionError::StorageFailure(format!("{}: {e}", dir.display())))?;
        let mut index = BTreeMap::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| SessionError::StorageFailure(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| SessionError::StorageFailure(e.to_string()))?.path();
            if !path.to_string_lossy().ends_with(".events.jsonl") {
                continue;
            }
            let (session, seq) = replay(&path)?;
            index.insert(session.session_id.clone(), Arc::new(Mutex::new(Slot { session, seq })));
        }
        Ok(Self { dir: Some(dir), index: RwLock::new(index) })
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.events.jsonl")))
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, session: Session) -> Result<(), SessionError> {
        if !valid_id(&session.session_id) {
            return Err(SessionError::InvalidArgument(format!("invalid session id {:?}", session.session_id)));
        }
        let mut index = self.index.write().expect("index lock");
        if index.contains_key(&session.session_id) {
            return Err(SessionError::InvalidArgument(format!("session {} already exists", session.session_id)));
        }
        if let Some(path) = self.log_path(&session.session_id) {
            append(&path, &EventRecord { seq: 1, at: session.started_at, event: SessionEvent::Created { session: session.clone() } })?;
        }
        index.insert(session.session_id.clone(), Arc::new(Mutex::new(Slot { session, seq: 1 })));
        Ok(())
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, SessionError> {
        self.index
            .read()
            .expect("index lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    /// Wait for exclusive access to a session.
    pub async fn lease(&self, id: &str) -> Result<SessionLease, SessionError> {
        let guard = self.slot(id)?.lock_owned().await;
        Ok(SessionLease { guard, path: self.log_path(id) })
    }

    /// Exclusive access, or `SessionBusy` if another request holds it.
    pub fn try_lease(&self, id: &str) -> Result<SessionLease, SessionError> {
        let guard = self.slot(id)?.try_lock_owned().map_err(|_| SessionError::SessionBusy)?;
        Ok(SessionLease { guard, path: self.log_path(id) })
    }

    pub async fn get(&self, id: &str) -> Result<Session, SessionError> {
        Ok(self.lease(id).await?.session().clone())
    }

    /// Matching sessions in session-id order.
    pub async fn snapshot(&self, filter: &SessionFilter) -> Vec<Session> {
        let slots: Vec<_> = self.index.read().expect("index lock").values().cloned().collect();
        let mut out = Vec::new();
        for slot in slots {
            let slot = slot.lock().await;
            if filter.matches(&slot.session) {
                out.push(slot.session.clone());
            }
        }
        out
    }

    pub async fn export<W: Write>(&self, filter: &SessionFilter, out: W) -> Result<usize, SessionError> {
        let sessions = self.snapshot(filter).await;
        write_sessions(&sessions, &SessionFilter::default(), out).map_err(|e| SessionError::StorageFailure(e.to_string()))
    }

    pub fn import(&self, sessions: impl IntoIterator<Item = Session>) -> Result<usize, SessionError> {
        let mut n = 0;
        for s in sessions {
            self.insert(s)?;
            n += 1;
        }
        Ok(n)
    }
}

fn replay(path: &Path) -> Result<(Session, u64), SessionError> {
    let file = File::open(path).map_err(|e| SessionError::StorageFailure(format!("{}: {e}", path.display())))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| SessionError::StorageFailure(e.to_string()))?;
    let mut session = None;
    let mut seq = 0;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) if i == last => {
                tracing::warn!(path = %path.display(), error = %e, "skipping torn trailing event");
                break;
            }
            Err(e) => {
                return Err(SessionError::StorageFailure(format!("{}:{}: {e}", path.display(), i + 1)));
            }
        };
        seq = record.seq;
        apply(&mut session, record.event)
            .map_err(|e| SessionError::StorageFailure(format!("{}:{}: {e}", path.display(), i + 1)))?;
    }
    session
        .map(|s| (s, seq))
        .ok_or_else(|| SessionError::StorageFailure(format!("{}: no creation event", path.display())))
}
