//! Scores produced by an external process speaking line-delimited JSON on
//! stdin/stdout.
//!
//! ```text
//! -> {"hello": 1, "sources": [...], "targets": [...]}
//! <- {"ok": true, "score_range": [lo, hi]}
//! -> {"id": 7, "train": [{"source": "en", "indices": [0, 4]}], "targets": ["es"]}
//! <- {"id": 7, "scores": [0.71]}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};
use crate::oracle::{ScoreOracle, TrainBundle};

#[derive(Debug, Clone)]
pub struct ExternalOptions {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Number of scorer processes; each serves one request at a time.
    pub processes: usize,
    pub timeout: Duration,
}

impl ExternalOptions {
    pub fn new(command: Vec<String>) -> Self {
        ExternalOptions {
            command,
            processes: 1,
            timeout: Duration::from_secs(600),
        }
    }
}

#[derive(Serialize)]
struct Hello<'a> {
    hello: u32,
    sources: &'a [String],
    targets: &'a [String],
}

#[derive(Deserialize)]
struct HelloReply {
    ok: bool,
    score_range: (f64, f64),
}

#[derive(Serialize)]
struct TrainEntry<'a> {
    source: &'a str,
    indices: &'a [usize],
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    train: Vec<TrainEntry<'a>>,
    targets: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    scores: Vec<f64>,
}

struct ScorerProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl ScorerProcess {
    fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::invalid("empty scorer command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::oracle(format!("cannot launch scorer {program:?}: {e}"), None))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ScorerProcess {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<String> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::oracle("scorer stdin closed", None))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::oracle(format!("cannot write to scorer: {e}"), None))?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(Error::oracle(format!("cannot read from scorer: {e}"), None)),
            Err(RecvTimeoutError::Timeout) => Err(Error::oracle(format!("scorer timed out after {timeout:?}"), None)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.try_wait().ok().flatten();
                Err(Error::oracle(format!("scorer exited ({status:?})"), None))
            }
        }
    }
}

impl Drop for ScorerProcess {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Pool {
    idle: Vec<ScorerProcess>,
    alive: usize,
}

pub struct ExternalOracle {
    sources: Vec<String>,
    lens: Vec<usize>,
    targets: Vec<String>,
    range: (f64, f64),
    timeout: Duration,
    pool: Mutex<Pool>,
    available: Condvar,
    next_id: AtomicU64,
}

impl ExternalOracle {
    /// Launches the scorer processes and performs the handshake with each.
    /// `sources` pairs every source name with its instance count.
    pub fn spawn(options: &ExternalOptions, sources: Vec<(String, usize)>, targets: Vec<String>) -> Result<Self> {
        if options.processes == 0 {
            return Err(Error::invalid("at least one scorer process is required"));
        }
        if targets.is_empty() {
            return Err(Error::invalid("no targets"));
        }
        let (names, lens): (Vec<String>, Vec<usize>) = sources.into_iter().unzip();
        crate::game::source_ids(&names)?;
        let hello = serde_json::to_string(&Hello {
            hello: 1,
            sources: &names,
            targets: &targets,
        })
        .expect("serializable");
        let mut idle = Vec::with_capacity(options.processes);
        let mut range = None;
        for _ in 0..options.processes {
            let mut proc = ScorerProcess::spawn(&options.command)?;
            let reply = proc.exchange(&hello, options.timeout)?;
            let parsed: HelloReply = serde_json::from_str(&reply)
                .map_err(|e| Error::oracle(format!("bad handshake reply: {e}"), Some(reply.clone())))?;
            let (lo, hi) = parsed.score_range;
            if !parsed.ok || !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::oracle("scorer refused the handshake", Some(reply)));
            }
            if range.is_some_and(|r| r != parsed.score_range) {
                return Err(Error::oracle("scorer processes disagree on score range", Some(reply)));
            }
            range = Some(parsed.score_range);
            idle.push(proc);
        }
        Ok(ExternalOracle {
            sources: names,
            lens,
            targets,
            range: range.expect("at least one process"),
            timeout: options.timeout,
            pool: Mutex::new(Pool {
                alive: idle.len(),
                idle,
            }),
            available: Condvar::new(),
            next_id: AtomicU64::new(0),
        })
    }

    fn checkout(&self) -> Result<ScorerProcess> {
        let mut pool = self.pool.lock().unwrap();
        loop {
            if let Some(p) = pool.idle.pop() {
                return Ok(p);
            }
            if pool.alive == 0 {
                return Err(Error::oracle("all scorer processes have failed", None));
            }
            pool = self.available.wait(pool).unwrap();
        }
    }

    fn request(&self, bundle: &[(usize, Vec<usize>)]) -> Result<ScoreVector> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let line = serde_json::to_string(&Request {
            id,
            train: bundle
                .iter()
                .map(|(s, idx)| TrainEntry {
                    source: &self.sources[*s],
                    indices: idx,
                })
                .collect(),
            targets: &self.targets,
        })
        .expect("serializable");
        let mut proc = self.checkout()?;
        let result = proc
            .exchange(&line, self.timeout)
            .and_then(|reply| self.parse(id, reply));
        let mut pool = self.pool.lock().unwrap();
        match &result {
            Ok(_) => pool.idle.push(proc),
            // a process that misbehaved is not trusted with further requests
            Err(_) => pool.alive -= 1,
        }
        drop(pool);
        self.available.notify_one();
        result
    }

    fn parse(&self, id: u64, reply: String) -> Result<ScoreVector> {
        let resp: Response = match serde_json::from_str(&reply) {
            Ok(r) => r,
            Err(e) => return Err(Error::oracle(format!("malformed scorer response: {e}"), Some(reply))),
        };
        if resp.id != id {
            return Err(Error::oracle(
                format!("response id {} does not match request {id}", resp.id),
                Some(reply),
            ));
        }
        let scores = ScoreVector::new(resp.scores);
        if let Err(e) = scores.validate(self.targets.len()) {
            return Err(Error::oracle(e.to_string(), Some(reply)));
        }
        Ok(scores)
    }
}

impl ScoreOracle for ExternalOracle {
    fn source_names(&self) -> &[String] {
        &self.sources
    }

    fn target_names(&self) -> &[String] {
        &self.targets
    }

    fn source_lens(&self) -> Vec<usize> {
        self.lens.clone()
    }

    fn score_range(&self) -> (f64, f64) {
        self.range
    }

    fn score(&self, _subset: &SubsetKey, bundle: &TrainBundle) -> Result<ScoreVector> {
        self.request(&bundle.per_source)
    }

    /// Asks the scorer for a model trained on nothing (`"train": []`).
    fn empty_score(&self) -> Result<ScoreVector> {
        self.request(&[])
    }
}
