use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::BackendResult;
use super::{ScorerBackend, TokenLogProb};
use crate::error::{BackendError, Error, Result};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

/// Cache key for one (backend id, context, completion) triple.
pub fn cache_key(backend_id: &str, context: &str, completion: &str) -> String {
    let mut h = Sha256::new();
    for part in [backend_id, context, completion] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

fn cache_file(dir: &Path, backend_id: &str) -> PathBuf {
    let safe: String = backend_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .take(48)
        .collect();
    let digest = hex::encode(Sha256::digest(backend_id.as_bytes()));
    dir.join(format!("{safe}-{}.jsonl", &digest[..12]))
}

/// Append-only on-disk response cache in front of a backend.
///
/// Without an inner backend the cache replays recorded responses and treats
/// every miss as an error.
pub struct CachedBackend {
    id: String,
    inner: Option<Arc<dyn ScorerBackend>>,
    path: PathBuf,
    entries: Mutex<HashMap<String, Vec<TokenLogProb>>>,
    writer: Mutex<Option<BufWriter<File>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachedBackend {
    pub fn open(dir: impl AsRef<Path>, inner: Arc<dyn ScorerBackend>) -> Result<Self> {
        let id = inner.id().to_string();
        Self::build(dir.as_ref(), id, Some(inner))
    }

    /// Offline replay of responses recorded for `backend_id`.
    pub fn replay(dir: impl AsRef<Path>, backend_id: &str) -> Result<Self> {
        Self::build(dir.as_ref(), backend_id.to_string(), None)
    }

    fn build(dir: &Path, id: String, inner: Option<Arc<dyn ScorerBackend>>) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = cache_file(dir, &id);
        let entries = load_entries(&path)?;
        Ok(CachedBackend {
            id,
            inner,
            path,
            entries: Mutex::new(entries),
            writer: Mutex::new(None),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Requests forwarded to the inner backend (or refused in replay mode).
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn flush(&self) -> Result<()> {
        if let Some(w) = self.writer.lock().expect("cache lock").as_mut() {
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<Vec<TokenLogProb>> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    fn store(&self, key: String, tokens: &[TokenLogProb]) -> Result<(), BackendError> {
        let entry = Entry {
            key: key.clone(),
            tokens: tokens.iter().map(|t| t.token.clone()).collect(),
            logprobs: tokens.iter().map(|t| t.logprob).collect(),
        };
        let line = serde_json::to_string(&entry).map_err(|e| BackendError::new(e.to_string()))?;
        {
            let mut guard = self.writer.lock().expect("cache lock");
            if guard.is_none() {
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
                    .map_err(|e| BackendError::new(format!("{}: {e}", self.path.display())))?;
                *guard = Some(BufWriter::new(file));
            }
            let w = guard.as_mut().expect("writer");
            writeln!(w, "{line}").map_err(|e| BackendError::new(format!("{}: {e}", self.path.display())))?;
        }
        self.entries.lock().expect("cache lock").insert(key, tokens.to_vec());
        Ok(())
    }

    fn miss(&self) -> BackendError {
        BackendError::new(format!(
            "no cached response in {} (offline replay)",
            self.path.display()
        ))
    }
}

fn load_entries(path: &Path) -> Result<HashMap<String, Vec<TokenLogProb>>> {
    let mut entries = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(entries),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = match serde_json::from_str(line) {
            Ok(e) => e,
            // A torn final line from an interrupted run is dropped.
            Err(_) if i + 1 == last => break,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        if entry.tokens.len() != entry.logprobs.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "tokens and logprobs differ in length".to_string(),
            });
        }
        let tokens = entry
            .tokens
            .into_iter()
            .zip(entry.logprobs)
            .map(|(t, lp)| TokenLogProb::new(t, lp))
            .collect();
        entries.insert(entry.key, tokens);
    }
    Ok(entries)
}

impl ScorerBackend for CachedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        self.logprobs_batch(&[(context, completion)]).remove(0)
    }

    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        let keys: Vec<String> = items.iter().map(|(c, x)| cache_key(&self.id, c, x)).collect();
        let mut out: Vec<Option<BackendResult>> = keys.iter().map(|k| self.get(k).map(Ok)).collect();
        let missing: Vec<usize> = (0..items.len()).filter(|&i| out[i].is_none()).collect();
        self.hits
            .fetch_add((items.len() - missing.len()) as u64, Ordering::Relaxed);
        if !missing.is_empty() {
            self.misses.fetch_add(missing.len() as u64, Ordering::Relaxed);
            match &self.inner {
                None => {
                    for &i in &missing {
                        out[i] = Some(Err(self.miss()));
                    }
                }
                Some(inner) => {
                    let request: Vec<(&str, &str)> = missing.iter().map(|&i| items[i]).collect();
                    let results = inner.logprobs_batch(&request);
                    for (&i, result) in missing.iter().zip(results) {
                        let stored = result.and_then(|tokens| {
                            self.store(keys[i].clone(), &tokens)?;
                            Ok(tokens)
                        });
                        out[i] = Some(stored);
                    }
                }
            }
        }
        out.into_iter()
            .map(|r| r.unwrap_or_else(|| Err(BackendError::new("backend returned too few results"))))
            .collect()
    }
}

impl Drop for CachedBackend {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{CountingBackend, HashNoiseBackend};

    #[test]
    fn second_lookup_is_a_hit_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(CountingBackend::new(HashNoiseBackend::new(3)));
        let cache = CachedBackend::open(dir.path(), inner.clone()).unwrap();
        let a = cache.logprobs("ctx", "Positiv .").unwrap();
        let b = cache.logprobs("ctx", "Positiv .").unwrap();
        assert_eq!(a, b);
        assert_eq!(inner.calls(), 1);
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
        drop(cache);

        let replay = CachedBackend::replay(dir.path(), "mock-noise-3").unwrap();
        assert_eq!(replay.logprobs("ctx", "Positiv .").unwrap(), a);
        assert!(replay.logprobs("ctx", "Negativ .").is_err());
    }

    #[test]
    fn keys_separate_their_parts() {
        assert_ne!(cache_key("b", "ab", "c"), cache_key("b", "a", "bc"));
    }

    #[test]
    fn torn_last_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = cache_file(dir.path(), "x");
        let good = serde_json::to_string(&Entry {
            key: "k".into(),
            tokens: vec!["a".into()],
            logprobs: vec![-1.0],
        })
        .unwrap();
        fs::write(&path, format!("{good}\n{{\"key\": \"k2\", \"tok")).unwrap();
        let cache = CachedBackend::replay(dir.path(), "x").unwrap();
        assert_eq!(cache.len(), 1);
    }
}
