use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::NerPrediction;

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub backend_name: String,
    pub backend_version: String,
    pub text_hash: String,
    /// Stored alongside the hash so collisions are detectable.
    pub text: String,
    pub predictions: Vec<NerPrediction>,
    pub fetched_at: u64,
}

pub fn text_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

type Key = (String, String, String);
type Slot = Arc<Mutex<Option<Vec<NerPrediction>>>>;

/// Backend responses keyed by (backend name, version, exact text).
///
/// Each key has its own lock, so concurrent callers asking for the same
/// sentence trigger one backend call. Entries never expire.
#[derive(Debug, Default)]
pub struct PredictionCache {
    slots: Mutex<HashMap<Key, Slot>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PredictionCache {
    pub fn in_memory() -> Self {
        PredictionCache::default()
    }

    /// Open (or create) an append-only JSONL cache file. A truncated final
    /// line from an interrupted write is discarded.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut slots = HashMap::new();
        let mut good_len: u64 = 0;
        let mut corrupt_at: Option<usize> = None;
        {
            file.seek(SeekFrom::Start(0))?;
            let mut reader = BufReader::new(&file);
            let mut line = String::new();
            let mut n = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 {
                    break;
                }
                n += 1;
                if corrupt_at.is_some() {
                    return Err(Error::Input {
                        path: path.display().to_string(),
                        message: format!("corrupt cache line {}", corrupt_at.unwrap_or(n)),
                    });
                }
                let complete = line.ends_with('\n');
                match serde_json::from_str::<CacheEntry>(line.trim_end()) {
                    Ok(entry) if complete => {
                        good_len += read as u64;
                        if text_digest(&entry.text) != entry.text_hash {
                            log::warn!("cache line {n}: hash does not match text; skipped");
                            continue;
                        }
                        slots.insert(
                            (entry.backend_name, entry.backend_version, entry.text),
                            Arc::new(Mutex::new(Some(entry.predictions))),
                        );
                    }
                    _ if line.trim().is_empty() && complete => good_len += read as u64,
                    _ => corrupt_at = Some(n),
                }
            }
        }
        if let Some(n) = corrupt_at {
            log::warn!("{}: discarding truncated line {n}", path.display());
            file.set_len(good_len)?;
        }
        Ok(PredictionCache {
            slots: Mutex::new(slots),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
            ..Default::default()
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn get(&self, backend: &str, version: &str, text: &str) -> Option<Vec<NerPrediction>> {
        let key = (backend.to_string(), version.to_string(), text.to_string());
        let slot = self.slots.lock().expect("cache lock").get(&key).cloned()?;
        let guard = slot.lock().expect("slot lock");
        guard.clone()
    }

    pub(crate) fn get_or_fetch(
        &self,
        backend: &str,
        version: &str,
        text: &str,
        fetch: impl FnOnce() -> Result<Vec<NerPrediction>>,
    ) -> Result<Vec<NerPrediction>> {
        let key = (backend.to_string(), version.to_string(), text.to_string());
        let slot = self
            .slots
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_default()
            .clone();
        let mut guard = slot.lock().expect("slot lock");
        if let Some(cached) = guard.as_ref() {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(cached.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let predictions = fetch()?;
        self.persist(backend, version, text, &predictions)?;
        *guard = Some(predictions.clone());
        Ok(predictions)
    }

    fn persist(&self, backend: &str, version: &str, text: &str, predictions: &[NerPrediction]) -> Result<()> {
        let Some(file) = &self.file else {
            return Ok(());
        };
        let entry = CacheEntry {
            backend_name: backend.to_string(),
            backend_version: version.to_string(),
            text_hash: text_digest(text),
            text: text.to_string(),
            predictions: predictions.to_vec(),
            fetched_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut f = file.lock().expect("cache file lock");
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }
}
