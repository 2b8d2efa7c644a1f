//! Black-box detectors. Only `{idx, label}` crosses the boundary.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorQuery {
    pub idx: i64,
    pub func: String,
}

/// Wire form of a verdict: label 1 is vulnerable, 0 non-vulnerable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct WireVerdict {
    idx: i64,
    label: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub idx: i64,
    pub vulnerable: bool,
}

pub trait Detector: Send + Sync {
    /// Raw verdicts for a batch, in any order.
    fn classify(&self, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError>;
}

/// Queries `detector` and checks the answer set: exactly one verdict per
/// requested idx. Verdicts come back in request order.
pub fn query_detector(detector: &dyn Detector, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let raw = detector.classify(batch)?;
    let mut by_idx: HashMap<i64, bool> = HashMap::new();
    for v in &raw {
        if by_idx.insert(v.idx, v.vulnerable).is_some() {
            return Err(HarnessError::ProtocolViolation(format!("duplicate verdict for idx {}", v.idx)));
        }
    }
    if by_idx.len() != batch.len() {
        let extra = by_idx.keys().find(|k| !batch.iter().any(|q| q.idx == **k));
        if let Some(e) = extra {
            return Err(HarnessError::ProtocolViolation(format!("verdict for unknown idx {e}")));
        }
    }
    batch
        .iter()
        .map(|q| {
            by_idx
                .get(&q.idx)
                .map(|&vulnerable| DetectorVerdict { idx: q.idx, vulnerable })
                .ok_or_else(|| HarnessError::ProtocolViolation(format!("missing verdict for idx {}", q.idx)))
        })
        .collect()
}

/// Labels everything the same way.
pub struct ConstantDetector(pub bool);

impl Detector for ConstantDetector {
    fn classify(&self, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError> {
        Ok(batch.iter().map(|q| DetectorVerdict { idx: q.idx, vulnerable: self.0 }).collect())
    }
}

/// Vulnerable iff the function text matches a pattern.
pub struct PatternDetector {
    pattern: Regex,
}

impl PatternDetector {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(PatternDetector { pattern: Regex::new(pattern)? })
    }
}

impl Detector for PatternDetector {
    fn classify(&self, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError> {
        Ok(batch
            .iter()
            .map(|q| DetectorVerdict { idx: q.idx, vulnerable: self.pattern.is_match(&q.func) })
            .collect())
    }
}

/// Answers protocol requests read from `input` with `detector`, one response
/// line per request.
pub fn serve(detector: &dyn Detector, input: impl BufRead, mut output: impl Write) -> Result<(), HarnessError> {
    let mut batch = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: DetectorQuery =
            serde_json::from_str(&line).map_err(|e| HarnessError::ProtocolViolation(format!("bad request: {e}")))?;
        batch.push(q);
    }
    for v in detector.classify(&batch)? {
        let w = WireVerdict { idx: v.idx, label: i64::from(v.vulnerable) };
        writeln!(output, "{}", serde_json::to_string(&w).expect("plain struct"))
            .map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    output.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

/// An external process speaking the JSONL protocol on its standard streams,
/// run through `sh -c`.
pub struct ExternalDetector {
    pub command: String,
    pub timeout: Duration,
    /// Spawn once per sample instead of once per batch.
    pub per_sample: bool,
}

impl ExternalDetector {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalDetector { command: command.into(), timeout: Duration::from_secs(300), per_sample: false }
    }

    fn run_once(&self, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| HarnessError::DetectorSpawnFailure(format!("{}: {e}", self.command)))?;
        let mut stdin = child.stdin.take().expect("piped");
        let payload: String = batch
            .iter()
            .map(|q| serde_json::to_string(q).expect("plain struct") + "\n")
            .collect();
        let writer = thread::spawn(move || {
            // a detector may exit without reading everything
            let _ = stdin.write_all(payload.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped");
        let reader = thread::spawn(move || {
            let mut buf = String::new();
            let r = stdout.read_to_string(&mut buf);
            r.map(|_| buf)
        });
        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(HarnessError::Timeout(self.timeout));
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(HarnessError::DetectorSpawnFailure(e.to_string())),
            }
        };
        let _ = writer.join();
        let out = reader
            .join()
            .expect("reader thread")
            .map_err(|e| HarnessError::Io(e.to_string()))?;
        let mut verdicts = Vec::new();
        for line in BufReader::new(out.as_bytes()).lines() {
            let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let w: WireVerdict = serde_json::from_str(&line)
                .map_err(|e| HarnessError::ProtocolViolation(format!("bad response line `{line}`: {e}")))?;
            let vulnerable = match w.label {
                0 => false,
                1 => true,
                other => return Err(HarnessError::ProtocolViolation(format!("label {other} for idx {}", w.idx))),
            };
            verdicts.push(DetectorVerdict { idx: w.idx, vulnerable });
        }
        if !status.success() {
            if verdicts.len() < batch.len() {
                return Err(HarnessError::DetectorCrashed(format!(
                    "exited with {status} after {} of {} verdicts",
                    verdicts.len(),
                    batch.len()
                )));
            }
            log::warn!("detector exited with {status} after a complete answer");
        }
        Ok(verdicts)
    }

    fn run_with_retry(&self, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError> {
        match self.run_once(batch) {
            Err(e @ (HarnessError::DetectorSpawnFailure(_) | HarnessError::DetectorCrashed(_) | HarnessError::Timeout(_))) => {
                log::warn!("detector failed ({e}); retrying once");
                self.run_once(batch).map_err(|e| match e {
                    HarnessError::DetectorCrashed(m) => HarnessError::ProtocolViolation(m),
                    other => other,
                })
            }
            other => other,
        }
    }
}

impl Detector for ExternalDetector {
    fn classify(&self, batch: &[DetectorQuery]) -> Result<Vec<DetectorVerdict>, HarnessError> {
        if self.per_sample {
            let mut all = Vec::with_capacity(batch.len());
            for q in batch {
                all.extend(self.run_with_retry(std::slice::from_ref(q))?);
            }
            Ok(all)
        } else {
            self.run_with_retry(batch)
        }
    }
}
