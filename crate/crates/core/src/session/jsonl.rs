//! Session JSONL interchange: one schema-versioned session object per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{Session, SessionStatus, SESSION_SCHEMA_VERSION};
use crate::persona::Condition;

#[derive(Debug, Error)]
#[error("{source_name}:{line}: {message}")]
pub struct SchemaError {
    pub source_name: String,
    /// 1-based; 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
pub struct SessionFilter {
    pub condition: Option<Condition>,
    pub status: Option<SessionStatus>,
}

impl SessionFilter {
    pub fn matches(&self, s: &Session) -> bool {
        self.condition.is_none_or(|c| c == s.condition) && self.status.is_none_or(|st| st == s.status)
    }
}

pub fn to_line(session: &Session) -> String {
    serde_json::to_string(session).expect("session serializes")
}

/// Write matching sessions, one per line. Returns the number written.
pub fn write_sessions<'a, W: Write>(
    sessions: impl IntoIterator<Item = &'a Session>,
    filter: &SessionFilter,
    mut out: W,
) -> io::Result<usize> {
    let mut n = 0;
    for s in sessions.into_iter().filter(|s| filter.matches(s)) {
        out.write_all(to_line(s).as_bytes())?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

fn check(session: &Session) -> Result<(), String> {
    if session.schema_version != SESSION_SCHEMA_VERSION {
        return Err(format!(
            "unsupported schema_version {} (expected {SESSION_SCHEMA_VERSION})",
            session.schema_version
        ));
    }
    if session.messages.windows(2).any(|w| w[1].sent_at < w[0].sent_at) {
        return Err("message timestamps decrease".into());
    }
    Ok(())
}

pub fn read_sessions<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Session>, SchemaError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let err = |message: String| SchemaError { source_name: source_name.to_string(), line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let session: Session = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        check(&session).map_err(err)?;
        out.push(session);
    }
    Ok(out)
}

/// Sessions from every `*.jsonl` file in `dir`, files in name order.
pub fn read_sessions_dir(dir: &Path) -> Result<Vec<Session>, SchemaError> {
    let dir_err = |message: String| SchemaError { source_name: dir.display().to_string(), line: 0, message };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| dir_err(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let file = File::open(&path).map_err(|e| SchemaError {
            source_name: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        out.extend(read_sessions(BufReader::new(file), &path.display().to_string())?);
    }
    Ok(out)
}
