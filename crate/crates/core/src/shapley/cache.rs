//! Write-once subset score cache, optionally backed by an append-only file.
//!
//! File layout (little endian):
//!
//! ```text
//! header:  b"SSCACHE\n"  u32 version  u32 universe  u32 targets
//! record:  subset key bytes (u32 count, u32 members..)  targets x f64  u64 sample seed
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};

const MAGIC: &[u8; 8] = b"SSCACHE\n";
pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub scores: ScoreVector,
    pub seed: u64,
}

struct Backing {
    path: PathBuf,
    file: File,
}

#[derive(Default)]
struct State {
    entries: HashMap<SubsetKey, CacheEntry>,
    in_flight: HashSet<SubsetKey>,
    hits: u64,
    misses: u64,
}

pub struct SubsetScoreCache {
    universe: usize,
    targets: usize,
    state: Mutex<State>,
    settled: Condvar,
    backing: Mutex<Option<Backing>>,
}

impl SubsetScoreCache {
    pub fn in_memory(universe: usize, targets: usize) -> Self {
        SubsetScoreCache {
            universe,
            targets,
            state: Mutex::default(),
            settled: Condvar::new(),
            backing: Mutex::new(None),
        }
    }

    /// Opens the cache file at `path`. With `resume`, existing records are
    /// loaded (and must match the problem's arity); otherwise the file is
    /// recreated empty.
    pub fn open(path: &Path, universe: usize, targets: usize, resume: bool) -> Result<Self> {
        let cache = Self::in_memory(universe, targets);
        let file_err = |message: String| Error::CacheFile {
            path: path.to_owned(),
            message,
        };
        let file = if resume && path.exists() {
            let mut bytes = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| Error::io(path, e))?;
            let entries = decode(&bytes, universe, targets).map_err(file_err)?;
            cache.state.lock().unwrap().entries = entries;
            OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?
        } else {
            let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
            f.write_all(&header(universe, targets))
                .map_err(|e| Error::io(path, e))?;
            f
        };
        *cache.backing.lock().unwrap() = Some(Backing {
            path: path.to_owned(),
            file,
        });
        Ok(cache)
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.state.lock().unwrap().hits
    }

    pub fn misses(&self) -> u64 {
        self.state.lock().unwrap().misses
    }

    pub fn get(&self, key: &SubsetKey) -> Option<CacheEntry> {
        self.state.lock().unwrap().entries.get(key).cloned()
    }

    pub fn keys(&self) -> Vec<SubsetKey> {
        let mut keys: Vec<_> = self.state.lock().unwrap().entries.keys().cloned().collect();
        keys.sort();
        keys
    }

    /// Inserts a new entry. A key can be written once only.
    pub fn insert(&self, key: SubsetKey, entry: CacheEntry) -> Result<()> {
        let mut state = self.state.lock().unwrap();
        self.insert_locked(&mut state, key, entry)
    }

    fn insert_locked(&self, state: &mut State, key: SubsetKey, entry: CacheEntry) -> Result<()> {
        entry.scores.validate(self.targets)?;
        if key.iter().any(|i| i >= self.universe) {
            return Err(Error::invalid(format!(
                "cache key {key} outside universe of {}",
                self.universe
            )));
        }
        if state.entries.contains_key(&key) {
            return Err(Error::invalid(format!("cache entry for {key} already written")));
        }
        if let Some(b) = self.backing.lock().unwrap().as_mut() {
            b.file
                .write_all(&encode_record(&key, &entry))
                .and_then(|_| b.file.flush())
                .map_err(|e| Error::io(&b.path, e))?;
        }
        state.entries.insert(key, entry);
        Ok(())
    }

    /// Returns the cached scores for `key`, computing and inserting them on
    /// a miss. Concurrent callers for the same key wait for the single
    /// computation in flight. The flag is true on a hit. A hit recorded
    /// under a different sample seed is an error.
    pub fn get_or_compute<F>(&self, key: &SubsetKey, seed: u64, compute: F) -> Result<(ScoreVector, bool)>
    where
        F: FnOnce() -> Result<ScoreVector>,
    {
        let mut state = self.state.lock().unwrap();
        loop {
            if let Some(e) = state.entries.get(key) {
                if e.seed != seed {
                    return Err(Error::invalid(format!(
                        "cached score for {key} was drawn with sample seed {}, this run needs {seed}; \
                         the cache belongs to a run with a different seed",
                        e.seed
                    )));
                }
                let scores = e.scores.clone();
                state.hits += 1;
                return Ok((scores, true));
            }
            if !state.in_flight.contains(key) {
                break;
            }
            state = self.settled.wait(state).unwrap();
        }
        state.in_flight.insert(key.clone());
        state.misses += 1;
        drop(state);

        let computed = compute();

        let mut state = self.state.lock().unwrap();
        state.in_flight.remove(key);
        let result = computed.and_then(|scores| {
            self.insert_locked(
                &mut state,
                key.clone(),
                CacheEntry {
                    scores: scores.clone(),
                    seed,
                },
            )?;
            Ok(scores)
        });
        drop(state);
        self.settled.notify_all();
        result.map(|s| (s, false))
    }
}

fn header(universe: usize, targets: usize) -> Vec<u8> {
    let mut h = MAGIC.to_vec();
    h.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
    h.extend_from_slice(&(universe as u32).to_le_bytes());
    h.extend_from_slice(&(targets as u32).to_le_bytes());
    h
}

fn encode_record(key: &SubsetKey, entry: &CacheEntry) -> Vec<u8> {
    let mut out = key.to_bytes();
    for s in entry.scores.as_slice() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&entry.seed.to_le_bytes());
    out
}

fn decode(
    bytes: &[u8],
    universe: usize,
    targets: usize,
) -> std::result::Result<HashMap<SubsetKey, CacheEntry>, String> {
    let h = header(universe, targets);
    if bytes.len() < h.len() || &bytes[..8] != MAGIC {
        return Err("not a subset score cache".into());
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if word(8) != CACHE_FORMAT_VERSION {
        return Err(format!("unsupported version {}", word(8)));
    }
    if word(12) as usize != universe || word(16) as usize != targets {
        return Err(format!(
            "written for {} sources x {} targets, problem has {universe} x {targets}",
            word(12),
            word(16)
        ));
    }
    let mut entries = HashMap::new();
    let mut at = h.len();
    while at < bytes.len() {
        let (key, used) =
            SubsetKey::from_bytes(&bytes[at..], universe).map_err(|e| format!("record at byte {at}: {e}"))?;
        let body = 8 * targets + 8;
        let rec = bytes
            .get(at + used..at + used + body)
            .ok_or_else(|| format!("truncated record at byte {at}"))?;
        let scores: Vec<f64> = rec[..8 * targets]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let seed = u64::from_le_bytes(rec[8 * targets..].try_into().unwrap());
        let entry = CacheEntry {
            scores: ScoreVector::new(scores),
            seed,
        };
        entry
            .scores
            .validate(targets)
            .map_err(|e| format!("record at byte {at}: {e}"))?;
        if entries.insert(key.clone(), entry).is_some() {
            return Err(format!("duplicate record for {key} at byte {at}"));
        }
        at += used + body;
    }
    Ok(entries)
}
