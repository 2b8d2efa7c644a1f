//! Synthetic attack corpus and an independent recount of the verdict log.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::Value;
use spt_core::corpus::CorpusRecord;
use spt_core::harness::AttackRun;
use spt_core::transforms::TransformRule;

pub const PATTERN: &str = r">= 0";

/// 25 samples: comparisons the detector keys on in reorderable and
/// non-reorderable positions, clean samples, and mislabeled ones.
pub fn synthetic_corpus() -> Vec<CorpusRecord> {
    (0..25)
        .map(|i| {
            let func = match i % 5 {
                0 => format!("int s{i}(int err, int n)\n{{\n    if (err >= 0)\n        n = n + {i};\n    return n;\n}}\n"),
                1 => format!(
                    "int s{i}(int err, int *buf)\n{{\n    int k = 0;\n    while (err >= 0) {{\n        k += buf[0];\n        err--;\n    }}\n    return k;\n}}\n"
                ),
                2 => format!("int s{i}(int a, int b)\n{{\n    if (a > b)\n        return a - {i};\n    return b;\n}}\n"),
                3 => format!(
                    "int s{i}(int err, int len)\n{{\n    int r = 0;\n    if (err >= 0 && len > {i})\n        r = 1;\n    if (len >= 0)\n        r += 2;\n    return r;\n}}\n"
                ),
                _ => format!("int s{i}(int fd)\n{{\n    int n = 0;\n    if (probe(fd) >= 0)\n        n = {i};\n    return n;\n}}\n"),
            };
            // every seventh sample carries the opposite ground truth
            let vulnerable = i % 5 != 2;
            let target = if i % 7 == 3 { !vulnerable } else { vulnerable };
            CorpusRecord { idx: i, func, target: Some(i64::from(target)) }
        })
        .collect()
}

fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub struct Recount {
    pub rate: f64,
    pub ranking: Vec<String>,
}

/// Recomputes the evasion rate and the rule ranking from the serialized
/// verdict log, the corpus and the variant texts alone.
pub fn recount(run: &AttackRun, corpus: &[CorpusRecord]) -> Recount {
    let log: Vec<Value> = run.verdict_log.iter().map(|e| serde_json::to_value(e).unwrap()).collect();
    let parent_text: HashMap<i64, &str> = corpus.iter().map(|r| (r.idx, r.func.as_str())).collect();
    let variant_text: HashMap<i64, &str> = run.variants.iter().map(|v| (v.idx, v.func.as_str())).collect();

    let positives: BTreeSet<i64> = log
        .iter()
        .filter(|e| e["parent_idx"].is_null() && e["target"] == 1 && e["label"] == 1)
        .map(|e| e["idx"].as_i64().unwrap())
        .collect();
    let mut evaded = BTreeSet::new();
    // rule -> (evaded parents, distances)
    let mut per_rule: BTreeMap<String, (BTreeSet<i64>, Vec<usize>)> = BTreeMap::new();
    for e in log.iter().filter(|e| !e["parent_idx"].is_null()) {
        let parent = e["parent_idx"].as_i64().unwrap();
        assert!(positives.contains(&parent), "variant of a non-true-positive");
        let fooled = e["label"] == 0;
        if fooled {
            evaded.insert(parent);
        }
        let rules: BTreeSet<&str> = e["rules"].as_array().unwrap().iter().map(|r| r.as_str().unwrap()).collect();
        if rules.len() == 1 {
            let idx = e["idx"].as_i64().unwrap();
            let entry = per_rule.entry(rules.into_iter().next().unwrap().to_string()).or_default();
            entry.1.push(edit_distance(parent_text[&parent], variant_text[&idx]));
            if fooled {
                entry.0.insert(parent);
            }
        }
    }
    let order: Vec<String> = TransformRule::ALL.iter().map(|r| r.as_str().to_string()).collect();
    let mut ranking: Vec<(String, usize, f64)> = per_rule
        .into_iter()
        .map(|(r, (ev, d))| (r, ev.len(), d.iter().sum::<usize>() as f64 / d.len() as f64))
        .collect();
    ranking.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.2.partial_cmp(&b.2).unwrap())
            .then(order.iter().position(|o| *o == a.0).cmp(&order.iter().position(|o| *o == b.0)))
    });
    Recount {
        rate: evaded.len() as f64 / positives.len() as f64,
        ranking: ranking.into_iter().map(|r| r.0).collect(),
    }
}
