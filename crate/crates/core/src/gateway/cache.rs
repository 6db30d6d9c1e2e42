//! Embedding cache keyed by `(model, text digest)`, optionally backed by an
//! append-only JSONL file of `{model, text_hash, dim, values}` rows.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub model: String,
    pub text_hash: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

#[derive(Default)]
struct Inner {
    vectors: HashMap<(String, String), Vec<f64>>,
    dims: HashMap<String, usize>,
}

pub struct EmbeddingCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self { path: None, inner: Mutex::new(Inner::default()) }
    }

    /// Open (or create on first write) a cache file. Rows with a dimension
    /// that disagrees with earlier rows of the same model are rejected.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let mut inner = Inner::default();
        if path.exists() {
            let file = File::open(&path).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| GatewayError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| {
                    GatewayError::Cache(format!("{}:{}: {e}", path.display(), lineno + 1))
                })?;
                if entry.values.len() != entry.dim {
                    return Err(GatewayError::Cache(format!(
                        "{}:{}: dim {} but {} values",
                        path.display(),
                        lineno + 1,
                        entry.dim,
                        entry.values.len()
                    )));
                }
                Self::insert_into(&mut inner, entry)?;
            }
        }
        Ok(Self { path: Some(path), inner: Mutex::new(inner) })
    }

    fn insert_into(inner: &mut Inner, entry: CacheEntry) -> Result<(), GatewayError> {
        let dim = *inner.dims.entry(entry.model.clone()).or_insert(entry.dim);
        if dim != entry.dim {
            return Err(GatewayError::DimensionMismatch { expected: dim, got: entry.dim });
        }
        inner.vectors.insert((entry.model, entry.text_hash), entry.values);
        Ok(())
    }

    pub fn get(&self, model: &str, text_hash: &str) -> Option<Vec<f64>> {
        let inner = self.inner.lock().expect("cache lock");
        inner.vectors.get(&(model.to_string(), text_hash.to_string())).cloned()
    }

    /// Recorded dimension for `model`, if any vector has been cached.
    pub fn dim(&self, model: &str) -> Option<usize> {
        self.inner.lock().expect("cache lock").dims.get(model).copied()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insert and, for file-backed caches, append the rows. Identical keys
    /// are last-writer-wins.
    pub fn insert_all(&self, entries: Vec<CacheEntry>) -> Result<(), GatewayError> {
        let mut inner = self.inner.lock().expect("cache lock");
        if let Some(path) = &self.path {
            let mut buf = String::new();
            for e in &entries {
                buf.push_str(&serde_json::to_string(e).map_err(|e| GatewayError::Cache(e.to_string()))?);
                buf.push('\n');
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
            file.write_all(buf.as_bytes()).map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        for e in entries {
            Self::insert_into(&mut inner, e)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(model: &str, hash: &str, values: Vec<f64>) -> CacheEntry {
        CacheEntry { model: model.into(), text_hash: hash.into(), dim: values.len(), values }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.insert_all(vec![entry("m", "h1", vec![1.0, 2.0]), entry("m", "h2", vec![0.5, -0.5])]).unwrap();
        }
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("m", "h2"), Some(vec![0.5, -0.5]));
        assert_eq!(cache.dim("m"), Some(2));
        assert_eq!(cache.get("other", "h2"), None);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let cache = EmbeddingCache::in_memory();
        cache.insert_all(vec![entry("m", "h1", vec![1.0, 2.0])]).unwrap();
        assert!(matches!(
            cache.insert_all(vec![entry("m", "h2", vec![1.0])]),
            Err(GatewayError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn corrupt_file_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"model\":\"m\",\"text_hash\":\"a\",\"dim\":1,\"values\":[1.0]}\nnot json\n").unwrap();
        let err = EmbeddingCache::open(&path).err().unwrap();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
