//! Corpus and variant record formats.

use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{Mode, Variant};
use crate::parser::{Label, SourceUnit};
use crate::transforms::TransformRule;

/// One corpus line: `{"idx": .., "func": "..", "target": 0|1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub idx: i64,
    pub func: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<i64>,
}

impl CorpusRecord {
    pub fn to_unit(&self) -> SourceUnit {
        let label = self.target.map_or(Label::Unknown, Label::from_target);
        SourceUnit::new(self.idx, self.func.clone(), label)
    }

    pub fn from_unit(unit: &SourceUnit) -> Self {
        CorpusRecord { idx: unit.id, func: unit.text.clone(), target: unit.label.target() }
    }
}

/// One emitted variant line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub idx: i64,
    pub parent_idx: i64,
    pub rules: Vec<TransformRule>,
    pub sites: Vec<usize>,
    pub mode: Mode,
    pub func: String,
}

impl VariantRecord {
    pub fn new(idx: i64, v: &Variant) -> Self {
        VariantRecord {
            idx,
            parent_idx: v.parent_id,
            rules: v.rules(),
            sites: v.provenance.iter().map(|a| a.ordinal).collect(),
            mode: v.mode,
            func: v.text.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

/// Streams JSONL corpus records; blank lines are skipped.
pub fn jsonl_records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<CorpusRecord, CorpusError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(CorpusError::Io { path: format!("line {}", i + 1), source: e })),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(serde_json::from_str(&l).map_err(|e| CorpusError::Json { line: i + 1, source: e })),
    })
}

/// Reads a JSONL corpus, or every `.c` file of a directory (sorted by name,
/// `idx` = position, label unknown).
pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let io_err = |e| CorpusError::Io { path: path.display().to_string(), source: e };
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "c"))
            .collect();
        files.sort();
        files
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let func = fs::read_to_string(f)
                    .map_err(|e| CorpusError::Io { path: f.display().to_string(), source: e })?;
                Ok(CorpusRecord { idx: i as i64, func, target: None })
            })
            .collect()
    } else {
        let file = fs::File::open(path).map_err(io_err)?;
        jsonl_records(BufReader::new(file)).collect()
    }
}
