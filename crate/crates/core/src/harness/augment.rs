//! Augmentation corpora: variants written back in the corpus input format
//! with the parent's label.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::corpus::{CorpusRecord, VariantRecord};

/// Records for `variants`, each labeled with its parent's target. With
/// `ratio < 1` a seeded subset of `round(ratio * n)` records is kept, in the
/// original order. Variants whose parent has no target are dropped.
pub fn augmentation_records(
    variants: &[VariantRecord],
    parents: &[CorpusRecord],
    ratio: f64,
    seed: u64,
) -> Vec<CorpusRecord> {
    let targets: HashMap<i64, Option<i64>> = parents.iter().map(|p| (p.idx, p.target)).collect();
    let labeled: Vec<CorpusRecord> = variants
        .iter()
        .filter_map(|v| match targets.get(&v.parent_idx).copied().flatten() {
            Some(t) => Some(CorpusRecord { idx: v.idx, func: v.func.clone(), target: Some(t) }),
            None => {
                log::warn!("variant {} has no labeled parent; not exported", v.idx);
                None
            }
        })
        .collect();
    let ratio = ratio.clamp(0.0, 1.0);
    if ratio >= 1.0 {
        return labeled;
    }
    let keep = (ratio * labeled.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, labeled.len(), keep).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| labeled[i].clone()).collect()
}

/// Writes one JSON record per line; returns the number written.
pub fn export_augmentation(records: &[CorpusRecord], mut out: impl Write) -> Result<usize, HarnessError> {
    if records.is_empty() {
        log::warn!("augmentation set is empty");
    }
    for r in records {
        let line = serde_json::to_string(r).expect("plain struct");
        writeln!(out, "{line}").map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(records.len())
}
