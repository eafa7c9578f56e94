//! Record/replay cache over any backend: append-only line-delimited store,
//! one record per sampled completion, keyed by a canonical content digest.
//!
//! Replay mode is strict — a miss is an error — which is what makes offline
//! evaluation runs deterministic and repeatable.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{cache_key, Completion, CompletionBackend, CompletionRequest, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Misses fall through to the wrapped backend and are appended.
    Record,
    /// Misses are errors; no live traffic.
    Replay,
}

/// One line of the store: a request snapshot plus the completion it produced.
/// The digest is recomputed from the snapshot on load, so silent edits and
/// bit rot surface as `CacheCorruption`.
#[derive(Serialize, Deserialize)]
struct CacheRecord {
    digest: String,
    request: RequestSnapshot,
    completions: Vec<Completion>,
    timestamp: u64,
}

#[derive(Serialize, Deserialize)]
struct RequestSnapshot {
    #[serde(flatten)]
    request: CompletionRequest,
    sample_index: u32,
}

pub struct ReplayCache {
    path: PathBuf,
    mode: CacheMode,
    inner: Option<Box<dyn CompletionBackend>>,
    state: Mutex<CacheState>,
}

struct CacheState {
    index: HashMap<String, Completion>,
    file: Option<File>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheStats {
    pub entries: usize,
    pub corrupt: usize,
}

impl ReplayCache {
    /// Open a store for strict replay; the file must exist.
    pub fn replay(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let index = load_index(&path, true)?;
        Ok(ReplayCache {
            path,
            mode: CacheMode::Replay,
            inner: None,
            state: Mutex::new(CacheState { index, file: None }),
        })
    }

    /// Open (or create) a store in record mode over a live backend.
    pub fn record(
        path: impl Into<PathBuf>,
        inner: Box<dyn CompletionBackend>,
    ) -> Result<Self, GatewayError> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let index = if path.exists() {
            load_index(&path, true)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(ReplayCache {
            path,
            mode: CacheMode::Record,
            inner: Some(inner),
            state: Mutex::new(CacheState {
                index,
                file: Some(file),
            }),
        })
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Store completions for a request, one entry per sample index.
    /// Write-once: digests already present are left untouched, so retries can
    /// never duplicate records.
    pub fn store(
        &self,
        request: &CompletionRequest,
        first_sample_index: u32,
        completions: &[Completion],
    ) -> Result<(), GatewayError> {
        let mut state = self.state.lock().unwrap();
        for (offset, completion) in completions.iter().enumerate() {
            let sample_index = first_sample_index + offset as u32;
            let digest = cache_key(request, sample_index);
            if state.index.contains_key(&digest) {
                continue;
            }
            let record = CacheRecord {
                digest: digest.clone(),
                request: RequestSnapshot {
                    request: request.clone(),
                    sample_index,
                },
                completions: vec![completion.clone()],
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            let line = serde_json::to_string(&record)?;
            if let Some(file) = state.file.as_mut() {
                writeln!(file, "{line}")?;
                file.flush()?;
            }
            state.index.insert(digest, completion.clone());
        }
        Ok(())
    }

    /// All cached completions for a request, or `None` on any miss.
    pub fn lookup(&self, request: &CompletionRequest) -> Option<Vec<Completion>> {
        let state = self.state.lock().unwrap();
        (0..request.sample_count)
            .map(|i| state.index.get(&cache_key(request, i)).cloned())
            .collect()
    }
}

impl CompletionBackend for ReplayCache {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        request.validate()?;
        if let Some(hit) = self.lookup(request) {
            return Ok(hit);
        }
        match self.mode {
            CacheMode::Replay => {
                let first_missing = {
                    let state = self.state.lock().unwrap();
                    (0..request.sample_count)
                        .map(|i| cache_key(request, i))
                        .find(|k| !state.index.contains_key(k))
                        .expect("lookup failed, so one index misses")
                };
                Err(GatewayError::ReplayMiss {
                    digest: first_missing,
                })
            }
            CacheMode::Record => {
                // fetch only the missing tail; earlier indices may be cached
                // from a previous run with a smaller sample count
                let cached: Vec<Completion> = {
                    let state = self.state.lock().unwrap();
                    (0..request.sample_count)
                        .map_while(|i| state.index.get(&cache_key(request, i)).cloned())
                        .collect()
                };
                let missing = request.sample_count - cached.len() as u32;
                let inner = self.inner.as_ref().expect("record mode has a live backend");
                let fetch_req = request.clone().with_samples(missing);
                let fetched = inner.complete(&fetch_req)?;
                if fetched.len() != missing as usize {
                    return Err(GatewayError::InvalidRequest(format!(
                        "backend returned {} completions for sample_count {missing}",
                        fetched.len()
                    )));
                }
                self.store(request, cached.len() as u32, &fetched)?;
                let mut out = cached;
                out.extend(fetched);
                Ok(out)
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self.mode {
            CacheMode::Record => "record",
            CacheMode::Replay => "replay",
        }
    }
}

fn load_index(path: &Path, strict: bool) -> Result<HashMap<String, Completion>, GatewayError> {
    let file = File::open(path).map_err(|e| GatewayError::CacheCorruption {
        path: path.display().to_string(),
        message: format!("cannot open store: {e}"),
    })?;
    let mut index = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CacheRecord =
            serde_json::from_str(&line).map_err(|e| GatewayError::CacheCorruption {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
        let recomputed = cache_key(&record.request.request, record.request.sample_index);
        if recomputed != record.digest {
            if strict {
                return Err(GatewayError::CacheCorruption {
                    path: path.display().to_string(),
                    message: format!(
                        "line {}: stored digest {} != recomputed {recomputed}",
                        lineno + 1,
                        record.digest
                    ),
                });
            }
            continue;
        }
        let completion = record.completions.into_iter().next().ok_or_else(|| {
            GatewayError::CacheCorruption {
                path: path.display().to_string(),
                message: format!("line {}: empty completions", lineno + 1),
            }
        })?;
        // write-once: first record for a digest wins
        index.entry(record.digest).or_insert(completion);
    }
    Ok(index)
}

/// Scan a store file, verifying every record's digest.
pub fn verify_cache_file(path: &Path) -> Result<CacheStats, GatewayError> {
    let file = File::open(path)?;
    let mut entries = 0usize;
    let mut corrupt = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheRecord>(&line) {
            Ok(record) => {
                let recomputed = cache_key(&record.request.request, record.request.sample_index);
                if recomputed == record.digest && !record.completions.is_empty() {
                    entries += 1;
                } else {
                    corrupt += 1;
                }
            }
            Err(_) => corrupt += 1,
        }
    }
    Ok(CacheStats { entries, corrupt })
}

impl std::fmt::Debug for ReplayCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReplayCache")
            .field("path", &self.path)
            .field("mode", &self.mode)
            .field("entries", &self.len())
            .finish()
    }
}
