//! Persistent completion cache.
//!
//! One append-only JSON-lines file per `(provider, model)` pair in the cache
//! directory, named `{provider}__{model}.jsonl` with characters outside
//! `[A-Za-z0-9._-]` replaced by `_`. Every line is one [`CacheEntry`]:
//!
//! | field               | meaning                                          |
//! |---------------------|--------------------------------------------------|
//! | `format`, `version` | always `rener-cache`, `1`                        |
//! | `key`               | SHA-256 hex of provider, model, template, prompt and decoding |
//! | `provider`, `model` | backend that produced the response               |
//! | `template_version`  | prompt template id the prompt was rendered with  |
//! | `prompt_digest`     | SHA-256 hex of the prompt                        |
//! | `temperature`, `max_output_tokens` | decoding parameters               |
//! | `response`          | raw completion text                              |
//! | `timestamp`         | seconds since the Unix epoch when written        |
//! | `usage`             | provider usage metadata, if any                  |
//!
//! Lines that fail to parse (a write cut short by a crash) are skipped on
//! load. An existing key is never overwritten.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{digest, Decoding};
use crate::error::{Error, Result};

const FORMAT: &str = "rener-cache";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub format: String,
    pub version: u32,
    pub key: String,
    pub provider: String,
    pub model: String,
    pub template_version: String,
    pub prompt_digest: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub response: String,
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    version: u32,
    provider: &'a str,
    model: &'a str,
    template_version: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_output_tokens: u32,
}

pub fn cache_key(provider: &str, model: &str, template_version: &str, prompt: &str, decoding: &Decoding) -> String {
    let material = KeyMaterial {
        version: VERSION,
        provider,
        model,
        template_version,
        prompt,
        temperature: decoding.temperature,
        max_output_tokens: decoding.max_output_tokens,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(bytes))
}

impl CacheEntry {
    pub fn new(
        provider: &str,
        model: &str,
        template_version: &str,
        prompt: &str,
        decoding: &Decoding,
        response: String,
        usage: Option<serde_json::Value>,
    ) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            format: FORMAT.into(),
            version: VERSION,
            key: cache_key(provider, model, template_version, prompt, decoding),
            provider: provider.into(),
            model: model.into(),
            template_version: template_version.into(),
            prompt_digest: digest(prompt),
            temperature: decoding.temperature,
            max_output_tokens: decoding.max_output_tokens,
            response,
            timestamp,
            usage,
        }
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

fn ends_mid_line(file: &mut fs::File) -> std::io::Result<bool> {
    if file.metadata()?.len() == 0 {
        return Ok(false);
    }
    file.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    file.read_exact(&mut last)?;
    Ok(last[0] != b'\n')
}

pub struct ResponseCache {
    dir: PathBuf,
    entries: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<()>,
}

impl ResponseCache {
    /// Opens (creating if needed) the cache directory and loads every
    /// `*.jsonl` file in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut entries = HashMap::new();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for path in files {
            let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(line) {
                    Ok(entry) if entry.format == FORMAT && entry.version == VERSION => {
                        entries.entry(entry.key.clone()).or_insert(entry);
                    }
                    Ok(entry) => log::warn!(
                        "{}:{}: skipping {} v{} entry",
                        path.display(),
                        n + 1,
                        entry.format,
                        entry.version
                    ),
                    Err(e) => log::warn!("{}:{}: skipping unreadable entry: {e}", path.display(), n + 1),
                }
            }
        }
        Ok(Self {
            dir,
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().unwrap().contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries ordered by provider, model, then key.
    pub fn entries(&self) -> Vec<CacheEntry> {
        let mut all: Vec<CacheEntry> = self.entries.read().unwrap().values().cloned().collect();
        all.sort_by(|a, b| (&a.provider, &a.model, &a.key).cmp(&(&b.provider, &b.model, &b.key)));
        all
    }

    pub fn file_for(&self, provider: &str, model: &str) -> PathBuf {
        self.dir.join(format!("{}__{}.jsonl", sanitize(provider), sanitize(model)))
    }

    /// Appends `entry` unless its key is already present. Returns whether it
    /// was written.
    pub fn put(&self, entry: CacheEntry) -> Result<bool> {
        let _guard = self.writer.lock().unwrap();
        if self.contains(&entry.key) {
            return Ok(false);
        }
        let path = self.file_for(&entry.provider, &entry.model);
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if ends_mid_line(&mut file).map_err(|e| Error::io(&path, e))? {
            line.insert(0, '\n');
        }
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))?;
        self.entries.write().unwrap().insert(entry.key.clone(), entry);
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decoding() -> Decoding {
        Decoding::default()
    }

    #[test]
    fn key_changes_with_every_component() {
        let base = cache_key("p", "m", "t", "prompt", &decoding());
        assert_eq!(base, cache_key("p", "m", "t", "prompt", &decoding()));
        assert_ne!(base, cache_key("q", "m", "t", "prompt", &decoding()));
        assert_ne!(base, cache_key("p", "n", "t", "prompt", &decoding()));
        assert_ne!(base, cache_key("p", "m", "u", "prompt", &decoding()));
        assert_ne!(base, cache_key("p", "m", "t", "prompt!", &decoding()));
        let warmer = Decoding {
            temperature: 0.7,
            ..decoding()
        };
        assert_ne!(base, cache_key("p", "m", "t", "prompt", &warmer));
        let longer = Decoding {
            max_output_tokens: 7,
            ..decoding()
        };
        assert_ne!(base, cache_key("p", "m", "t", "prompt", &longer));
        assert_eq!(base.len(), 64);
    }

    #[test]
    fn entries_persist_and_are_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let first = CacheEntry::new("openai", "gpt-4o", "t1", "hello", &decoding(), "1. A (x)".into(), None);
        assert!(cache.put(first.clone()).unwrap());
        let mut second = first.clone();
        second.response = "changed".into();
        assert!(!cache.put(second).unwrap());

        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get(&first.key).unwrap().response, "1. A (x)");
        assert!(cache.file_for("openai", "gpt-4o").ends_with("openai__gpt-4o.jsonl"));
    }

    #[test]
    fn truncated_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let entry = CacheEntry::new("p", "m/1", "t", "x", &decoding(), "r".into(), None);
        cache.put(entry.clone()).unwrap();
        let path = cache.file_for("p", "m/1");
        let mut raw = fs::read_to_string(&path).unwrap();
        raw.push_str("{\"format\":\"rener-cache\",\"ver");
        fs::write(&path, raw).unwrap();
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 1);
        assert!(reopened.contains(&entry.key));

        let later = CacheEntry::new("p", "m/1", "t", "y", &decoding(), "s".into(), None);
        reopened.put(later.clone()).unwrap();
        let again = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(again.get(&later.key).unwrap().response, "s");
    }
}
