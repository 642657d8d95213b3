//! Verdict cache: in-memory map with optional append-only disk persistence.
//!
//! Keys are SHA-256 over (template version, backend name, prompt), so a
//! template edit or backend swap can never serve a stale reply. Values are
//! raw backend replies; parsing is deterministic, so caching the reply
//! suffices for cache soundness. The disk log is JSONL, one entry per line,
//! reloaded wholesale on open; a partial trailing line (interrupted run) is
//! dropped, corruption anywhere else is an error.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache entry at {path}:{line}")]
    Corrupt { path: PathBuf, line: u64 },
}

#[derive(Serialize, Deserialize)]
struct CacheLine<'a> {
    k: &'a str,
    v: &'a str,
}

#[derive(Deserialize)]
struct CacheLineOwned {
    k: String,
    v: String,
}

pub struct VerdictCache {
    entries: Mutex<HashMap<String, String>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl VerdictCache {
    /// Cache for a single run; nothing persists.
    pub fn in_memory() -> Self {
        VerdictCache {
            entries: Mutex::new(HashMap::new()),
            log: None,
            path: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Persistent cache under `dir` (created if missing). Existing entries
    /// are loaded, so re-runs resume without re-invoking the backend.
    pub fn at_dir(dir: &Path) -> Result<Self, CacheError> {
        std::fs::create_dir_all(dir).map_err(|source| CacheError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join("judge-cache.jsonl");
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|source| CacheError::Io {
                path: path.clone(),
                source,
            })?;
            let mut lines = BufReader::new(file).lines().enumerate().peekable();
            while let Some((i, line)) = lines.next() {
                let line = line.map_err(|source| CacheError::Io {
                    path: path.clone(),
                    source,
                })?;
                match serde_json::from_str::<CacheLineOwned>(&line) {
                    Ok(entry) => {
                        entries.insert(entry.k, entry.v);
                    }
                    // A torn final line is an interrupted run, not corruption.
                    Err(_) if lines.peek().is_none() => break,
                    Err(_) => {
                        return Err(CacheError::Corrupt {
                            path,
                            line: i as u64 + 1,
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| CacheError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(VerdictCache {
            entries: Mutex::new(entries),
            log: Some(Mutex::new(file)),
            path: Some(path),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    /// Content-hash key.
    pub fn key(template_version: &str, backend_name: &str, prompt: &str) -> String {
        let mut h = Sha256::new();
        for part in [template_version, backend_name, prompt] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let hit = self.entries.lock().unwrap().get(key).cloned();
        match &hit {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        hit
    }

    pub fn put(&self, key: &str, value: &str) -> Result<(), CacheError> {
        if let Some(log) = &self.log {
            let line = serde_json::to_string(&CacheLine { k: key, v: value })
                .expect("cache line serialization cannot fail");
            let mut file = log.lock().unwrap();
            let io = |source| CacheError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            };
            file.write_all(line.as_bytes()).map_err(io)?;
            file.write_all(b"\n").map_err(io)?;
            file.flush().map_err(io)?;
        }
        self.entries
            .lock()
            .unwrap()
            .insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}
