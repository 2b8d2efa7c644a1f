//! Attack accounting: best-of-variants evasion, per-rule counts and
//! efficiency.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::composer::Mode;
use crate::transforms::TransformRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub idx: i64,
    pub rules: Vec<TransformRule>,
    pub mode: Mode,
    pub edit_distance: usize,
    /// The detector labeled this variant non-vulnerable.
    pub evaded: bool,
}

impl VariantOutcome {
    fn sole_rule(&self) -> Option<TransformRule> {
        let first = *self.rules.first()?;
        self.rules.iter().all(|&r| r == first).then_some(first)
    }
}

/// One true-positive sample and the verdicts on its variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub idx: i64,
    pub variants: Vec<VariantOutcome>,
}

impl SampleOutcome {
    pub fn evaded(&self) -> bool {
        self.variants.iter().any(|v| v.evaded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    pub rule: TransformRule,
    pub variants: usize,
    /// Samples with at least one evading variant built from this rule alone.
    pub evaded_samples: usize,
    pub mean_edit_distance: f64,
    /// Evaded samples as a percentage of all true positives.
    pub evasion_points: f64,
    /// Evasion points per character changed.
    pub ier_cc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackReport {
    pub samples: Vec<SampleOutcome>,
}

impl AttackReport {
    /// Fraction of true positives with at least one evading variant.
    pub fn evasion_rate(&self) -> Result<f64, HarnessError> {
        if self.samples.is_empty() {
            return Err(HarnessError::EmptyReport);
        }
        let evaded = self.samples.iter().filter(|s| s.evaded()).count();
        Ok(evaded as f64 / self.samples.len() as f64)
    }

    /// Fraction of all variants labeled non-vulnerable.
    pub fn per_variant_evasion_rate(&self) -> Option<f64> {
        let all: Vec<_> = self.samples.iter().flat_map(|s| &s.variants).collect();
        (!all.is_empty()).then(|| all.iter().filter(|v| v.evaded).count() as f64 / all.len() as f64)
    }

    /// Statistics for every rule that produced at least one single-rule
    /// variant, in rule order.
    pub fn rule_stats(&self) -> Vec<RuleStats> {
        let total = self.samples.len();
        let mut per_rule: BTreeMap<TransformRule, (usize, usize, BTreeSet<i64>)> = BTreeMap::new();
        for s in &self.samples {
            for v in &s.variants {
                let Some(rule) = v.sole_rule() else { continue };
                let e = per_rule.entry(rule).or_default();
                e.0 += 1;
                e.1 += v.edit_distance;
                if v.evaded {
                    e.2.insert(s.idx);
                }
            }
        }
        per_rule
            .into_iter()
            .map(|(rule, (n, dist, evaded))| {
                let mean = dist as f64 / n as f64;
                let points = if total == 0 { 0.0 } else { evaded.len() as f64 / total as f64 * 100.0 };
                RuleStats {
                    rule,
                    variants: n,
                    evaded_samples: evaded.len(),
                    mean_edit_distance: mean,
                    evasion_points: points,
                    ier_cc: if mean > 0.0 { points / mean } else { 0.0 },
                }
            })
            .collect()
    }

    /// Rules by evaded-sample count, then lower mean edit distance, then
    /// rule order.
    pub fn rank_rules(&self) -> Vec<TransformRule> {
        let mut stats = self.rule_stats();
        stats.sort_by(|a, b| {
            b.evaded_samples
                .cmp(&a.evaded_samples)
                .then(a.mean_edit_distance.total_cmp(&b.mean_edit_distance))
                .then(a.rule.cmp(&b.rule))
        });
        stats.into_iter().map(|s| s.rule).collect()
    }

    /// IER/CC per rule.
    pub fn efficiency(&self) -> BTreeMap<TransformRule, f64> {
        self.rule_stats().into_iter().map(|s| (s.rule, s.ier_cc)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "true_positives": self.samples.len(),
            "evasion_rate": self.evasion_rate().ok(),
            "per_variant_evasion_rate": self.per_variant_evasion_rate(),
            "ranking": self.rank_rules(),
            "rules": self.rule_stats(),
            "samples": self.samples,
        })
    }

    /// Aligned plain-text table, one row per rule.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rate = self.evasion_rate().map_or("n/a".to_string(), |r| format!("{:.2}%", r * 100.0));
        let _ = writeln!(out, "true positives: {}   evasion rate: {rate}", self.samples.len());
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>8} {:>10} {:>10} {:>8}",
            "rule", "variants", "evaded", "rate (pp)", "mean dist", "IER/CC"
        );
        for s in self.rule_stats() {
            let _ = writeln!(
                out,
                "{:<24} {:>8} {:>8} {:>10.2} {:>10.1} {:>8.3}",
                s.rule.as_str(),
                s.variants,
                s.evaded_samples,
                s.evasion_points,
                s.mean_edit_distance,
                s.ier_cc
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(rule: TransformRule, dist: usize, evaded: bool) -> VariantOutcome {
        VariantOutcome { idx: 0, rules: vec![rule], mode: Mode::Single, edit_distance: dist, evaded }
    }

    fn sample(idx: i64, variants: Vec<VariantOutcome>) -> SampleOutcome {
        SampleOutcome { idx, variants }
    }

    #[test]
    fn best_of_variants_rate() {
        let mut samples: Vec<_> = (0..10).map(|i| sample(i, vec![v(TransformRule::CondReorder, 10, false)])).collect();
        for s in samples.iter_mut().take(4) {
            s.variants.push(v(TransformRule::CondNegate, 10, true));
        }
        let r = AttackReport { samples };
        assert!((r.evasion_rate().unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(AttackReport::default().evasion_rate(), Err(HarnessError::EmptyReport));
    }

    #[test]
    fn ranking_and_tie_break() {
        use TransformRule::*;
        let mut samples = Vec::new();
        for i in 0..5 {
            samples.push(sample(i, vec![v(CondReorder, 20, true), v(CondNegate, 40, i < 2)]));
        }
        let r = AttackReport { samples };
        assert_eq!(r.rank_rules(), [CondReorder, CondNegate]);

        let tie = AttackReport {
            samples: vec![sample(1, vec![v(ForToWhile, 90, true), v(WhileToFor, 40, true)])],
        };
        assert_eq!(tie.rank_rules(), [WhileToFor, ForToWhile]);
    }

    #[test]
    fn efficiency_ratio() {
        use TransformRule::*;
        let mut samples = vec![sample(0, vec![v(CondReorder, 25, true), v(CondNegate, 100, true)])];
        for i in 1..10 {
            samples.push(sample(i, vec![v(CondReorder, 25, false), v(CondNegate, 100, false)]));
        }
        let eff = AttackReport { samples }.efficiency();
        assert!((eff[&CondReorder] / eff[&CondNegate] - 4.0).abs() < 1e-12);
        // 10 points at a mean of 50 characters
        let r = AttackReport {
            samples: (0..10).map(|i| sample(i, vec![v(AssignSplit, 50, i == 0)])).collect(),
        };
        assert!((r.efficiency()[&AssignSplit] - 0.2).abs() < 1e-12);
    }
}
