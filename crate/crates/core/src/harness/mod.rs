//! Black-box attack loop: detector queries, true-positive selection, variant
//! evaluation, validation by compilation and differential execution, and
//! augmentation export.

mod augment;
mod compile;
mod detector;
mod differential;
mod report;

use std::collections::HashMap;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{augmentation_records, export_augmentation};
pub use compile::{compile_check, with_stubs, CompilerSpec};
pub use detector::{
    query_detector, serve, ConstantDetector, Detector, DetectorQuery, DetectorVerdict, ExternalDetector,
    PatternDetector,
};
pub use differential::{
    differential_test, driver_source, sample_inputs, signature, DifferentialRunner, Equivalence, IntSpec, ParamKind,
    Signature, ARRAY_LEN,
};
pub use report::{AttackReport, RuleStats, SampleOutcome, VariantOutcome};

use crate::composer::{generate_all, ComposeError, GenerationConfig, Mode, Variant};
use crate::corpus::{CorpusRecord, VariantRecord};
use crate::metrics::levenshtein;
use crate::transforms::TransformRule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("cannot start detector: {0}")]
    DetectorSpawnFailure(String),
    #[error("detector crashed: {0}")]
    DetectorCrashed(String),
    #[error("detector protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("detector timed out after {0:?}")]
    Timeout(Duration),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("report has no true positives")]
    EmptyReport,
    #[error("cannot start compiler: {0}")]
    CompilerSpawnFailure(String),
    #[error("compilation failed: {0}")]
    CompileFailure(String),
    #[error("execution timed out after {0:?}")]
    ExecutionTimeout(Duration),
    #[error("function is not driver-compatible: {0}")]
    NotDriverCompatible(String),
    #[error("the detector labels no ground-truth-vulnerable sample as vulnerable; nothing to attack")]
    NoTruePositives,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// Samples with `target == 1` that the detector labels vulnerable, in corpus
/// order. `verdicts` are matched by idx.
pub fn select_true_positives(corpus: &[CorpusRecord], verdicts: &[DetectorVerdict]) -> Vec<CorpusRecord> {
    let by_idx: HashMap<i64, bool> = verdicts.iter().map(|v| (v.idx, v.vulnerable)).collect();
    corpus
        .iter()
        .filter(|r| r.target == Some(1) && by_idx.get(&r.idx) == Some(&true))
        .cloned()
        .collect()
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub generation: GenerationConfig,
    /// When set, only variants that pass `compile_check` are queried.
    pub compile_gate: Option<CompilerSpec>,
    /// First idx handed to variants; must exceed every corpus idx.
    pub idx_base: i64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { generation: GenerationConfig::default(), compile_gate: None, idx_base: 1_000_000 }
    }
}

/// One detector answer, as it came back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictLogEntry {
    pub idx: i64,
    /// Set for variants.
    pub parent_idx: Option<i64>,
    pub rules: Vec<TransformRule>,
    pub mode: Option<Mode>,
    pub target: Option<i64>,
    pub label: i64,
}

#[derive(Debug, Clone, Default)]
pub struct AttackRun {
    pub report: AttackReport,
    pub verdict_log: Vec<VerdictLogEntry>,
    pub variants: Vec<VariantRecord>,
    pub samples: usize,
    pub unparsable: usize,
    pub over_budget: usize,
    pub compile_rejected: usize,
}

fn queries(records: impl Iterator<Item = (i64, String)>) -> Vec<DetectorQuery> {
    records.map(|(idx, func)| DetectorQuery { idx, func }).collect()
}

/// Queries the corpus, attacks every true positive with its generated
/// variants and records each verdict.
pub fn run_attack(
    detector: &dyn Detector,
    corpus: &[CorpusRecord],
    config: &AttackConfig,
) -> Result<AttackRun, HarnessError> {
    if let Some(max) = corpus.iter().map(|r| r.idx).max() {
        if config.idx_base <= max {
            return Err(HarnessError::InvalidConfig(format!(
                "variant idx base {} does not exceed the largest corpus idx {max}",
                config.idx_base
            )));
        }
    }
    let mut run = AttackRun { samples: corpus.len(), ..AttackRun::default() };
    let verdicts = query_detector(detector, &queries(corpus.iter().map(|r| (r.idx, r.func.clone()))))?;
    for (r, v) in corpus.iter().zip(&verdicts) {
        run.verdict_log.push(VerdictLogEntry {
            idx: r.idx,
            parent_idx: None,
            rules: Vec::new(),
            mode: None,
            target: r.target,
            label: i64::from(v.vulnerable),
        });
    }
    let positives = select_true_positives(corpus, &verdicts);
    if positives.is_empty() {
        return Err(HarnessError::NoTruePositives);
    }

    let generated: Vec<Result<(Vec<Variant>, usize), HarnessError>> = positives
        .par_iter()
        .map(|tp| {
            let variants = match generate_all(&tp.to_unit(), &config.generation) {
                Ok(v) => v,
                Err(ComposeError::Parse(e)) => {
                    log::warn!("sample {} does not parse: {e}", tp.idx);
                    return Ok((Vec::new(), usize::MAX));
                }
                Err(e @ ComposeError::BudgetExceeded { .. }) => {
                    log::warn!("sample {}: {e}", tp.idx);
                    return Ok((Vec::new(), usize::MAX - 1));
                }
                Err(e) => return Err(e.into()),
            };
            let Some(cc) = &config.compile_gate else { return Ok((variants, 0)) };
            let mut kept = Vec::with_capacity(variants.len());
            let mut rejected = 0;
            for v in variants {
                if compile_check(cc, &v.text)? {
                    kept.push(v);
                } else {
                    rejected += 1;
                }
            }
            Ok((kept, rejected))
        })
        .collect();

    let mut next = config.idx_base;
    let mut pending = Vec::new();
    for (tp, g) in positives.iter().zip(generated) {
        let (variants, rejected) = g?;
        match rejected {
            usize::MAX => run.unparsable += 1,
            n if n == usize::MAX - 1 => run.over_budget += 1,
            n => run.compile_rejected += n,
        }
        let mut outcomes = Vec::with_capacity(variants.len());
        for v in &variants {
            let rec = VariantRecord::new(next, v);
            outcomes.push(VariantOutcome {
                idx: next,
                rules: rec.rules.clone(),
                mode: v.mode,
                edit_distance: levenshtein(&tp.func, &v.text),
                evaded: false,
            });
            run.variants.push(rec);
            next += 1;
        }
        pending.push(SampleOutcome { idx: tp.idx, variants: outcomes });
    }

    let answers = query_detector(detector, &queries(run.variants.iter().map(|v| (v.idx, v.func.clone()))))?;
    let target_of: HashMap<i64, Option<i64>> = corpus.iter().map(|r| (r.idx, r.target)).collect();
    let labels: HashMap<i64, bool> = answers.iter().map(|a| (a.idx, a.vulnerable)).collect();
    for (v, a) in run.variants.iter().zip(&answers) {
        run.verdict_log.push(VerdictLogEntry {
            idx: v.idx,
            parent_idx: Some(v.parent_idx),
            rules: v.rules.clone(),
            mode: Some(v.mode),
            target: target_of[&v.parent_idx],
            label: i64::from(a.vulnerable),
        });
    }
    for s in &mut pending {
        for o in &mut s.variants {
            o.evaded = !labels[&o.idx];
        }
    }
    run.report = AttackReport { samples: pending };
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(idx: i64, target: i64, func: &str) -> CorpusRecord {
        CorpusRecord { idx, func: func.into(), target: Some(target) }
    }

    #[test]
    fn true_positive_selection() {
        let corpus: Vec<_> = [1, 1, 0, 0].iter().enumerate().map(|(i, &t)| rec(i as i64, t, "")).collect();
        let verdicts: Vec<_> = [true, false, true, false]
            .iter()
            .enumerate()
            .map(|(i, &v)| DetectorVerdict { idx: i as i64, vulnerable: v })
            .collect();
        let tps = select_true_positives(&corpus, &verdicts);
        assert_eq!(tps.iter().map(|r| r.idx).collect::<Vec<_>>(), [0]);
        let all_correct: Vec<_> = corpus.iter().map(|r| DetectorVerdict { idx: r.idx, vulnerable: r.target == Some(1) }).collect();
        assert_eq!(select_true_positives(&corpus, &all_correct).len(), 2);
    }

    #[test]
    fn attack_aborts_without_true_positives() {
        let corpus = [rec(0, 1, "int f(int a) { if (a > 0) return 1; return 0; }")];
        let err = run_attack(&ConstantDetector(false), &corpus, &AttackConfig::default()).unwrap_err();
        assert_eq!(err, HarnessError::NoTruePositives);
    }

    #[test]
    fn pattern_broken_by_reordering() {
        let func = "int f(int err) {\n    if (err >= 0)\n        return 1;\n    return 0;\n}\n";
        let corpus = [rec(0, 1, func)];
        let detector = PatternDetector::new(r"err >= 0").unwrap();
        let run = run_attack(&detector, &corpus, &AttackConfig::default()).unwrap();
        assert_eq!(run.report.evasion_rate().unwrap(), 1.0);
        assert_eq!(run.report.rank_rules()[0], TransformRule::CondReorder);
        assert!(run.variants.iter().all(|v| v.idx >= 1_000_000 && v.parent_idx == 0));
        assert_eq!(run.verdict_log.len(), 1 + run.variants.len());

        let unchanged = run_attack(&ConstantDetector(true), &corpus, &AttackConfig::default()).unwrap();
        assert_eq!(unchanged.report.evasion_rate().unwrap(), 0.0);
    }

    #[test]
    fn idx_base_must_clear_the_corpus() {
        let corpus = [rec(5, 1, "int f(){return 0;}")];
        let cfg = AttackConfig { idx_base: 5, ..AttackConfig::default() };
        assert!(matches!(run_attack(&ConstantDetector(true), &corpus, &cfg), Err(HarnessError::InvalidConfig(_))));
    }
}
