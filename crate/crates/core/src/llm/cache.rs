use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

/// Digest of everything that determines a completion request.
///
/// Fields are length-prefixed so no two distinct triples share an encoding.
/// The temperature is encoded with its shortest round-trip decimal form.
pub fn cache_key(model: &str, temperature: f64, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    for field in [model, &format!("{temperature:?}"), prompt] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub temperature: f64,
    pub response: String,
    pub recorded_at: DateTime<Utc>,
}

/// Response cache backed by an append-only JSONL file. Reads are concurrent;
/// writes go through a single lock. The first entry recorded for a key wins.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (or creates on first write) a cache file.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let content = fs::read_to_string(path).map_err(|e| LlmError::Cache {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            for (i, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(line).map_err(|e| LlmError::Cache {
                    path: path.display().to_string(),
                    reason: format!("line {}: {e}", i + 1),
                })?;
                entries.entry(entry.key.clone()).or_insert(entry);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .map(|e| e.response.clone())
    }

    /// Stores an entry unless the key is already present. Returns whether it
    /// was written.
    pub fn insert(&self, entry: CacheEntry) -> Result<bool, LlmError> {
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        if self
            .entries
            .read()
            .expect("cache lock poisoned")
            .contains_key(&entry.key)
        {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            let cache_err = |e: std::io::Error| LlmError::Cache {
                path: path.display().to_string(),
                reason: e.to_string(),
            };
            if writer.is_none() {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(cache_err)?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(cache_err)?;
                *writer = Some(file);
            }
            let file = writer.as_mut().expect("opened above");
            let mut line = serde_json::to_string(&entry).expect("cache entries serialize");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(cache_err)?;
            file.flush().map_err(cache_err)?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(entry.key.clone(), entry);
        Ok(true)
    }
}
