//! Compile and differential check of every generated variant of every
//! fixture.

use std::collections::BTreeSet;

use rayon::prelude::*;
use spt_core::composer::{generate_all, GenerationConfig, Mode};
use spt_core::harness::{compile_check, CompilerSpec, DifferentialRunner, Equivalence};
use spt_core::parser::{Label, SourceUnit};
use spt_core::transforms::TransformRule;

pub const INPUTS: usize = 256;
pub const SEED: u64 = 2024;

#[derive(Debug, Default)]
pub struct Sweep {
    pub fixtures: usize,
    pub variants: usize,
    pub failures: Vec<String>,
    pub rules: BTreeSet<TransformRule>,
    pub modes: BTreeSet<Mode>,
}

pub fn sweep(fixtures: &[(String, String)]) -> Sweep {
    let cc = CompilerSpec::default();
    let config = GenerationConfig::default();
    let per_fixture: Vec<Sweep> = fixtures
        .par_iter()
        .enumerate()
        .map(|(i, (name, text))| {
            let mut s = Sweep { fixtures: 1, ..Sweep::default() };
            let unit = SourceUnit::new(i as i64, text.clone(), Label::Unknown);
            let variants = match generate_all(&unit, &config) {
                Ok(v) => v,
                Err(e) => {
                    s.failures.push(format!("{name}: {e}"));
                    return s;
                }
            };
            let runner = match DifferentialRunner::new(cc.clone(), text, INPUTS, SEED) {
                Ok(r) => r,
                Err(e) => {
                    s.failures.push(format!("{name}: {e}"));
                    return s;
                }
            };
            let outcomes: Vec<Option<String>> = variants
                .par_iter()
                .map(|v| {
                    let what = format!("{name} {:?} via {:?}", v.mode, v.rules());
                    match compile_check(&cc, &v.text) {
                        Ok(true) => {}
                        Ok(false) => return Some(format!("{what}: does not compile")),
                        Err(e) => return Some(format!("{what}: {e}")),
                    }
                    match runner.check(&v.text) {
                        Ok(Equivalence::Equivalent) => None,
                        Ok(Equivalence::Divergent { input, .. }) => Some(format!("{what}: diverges on {input:?}")),
                        Err(e) => Some(format!("{what}: {e}")),
                    }
                })
                .collect();
            for v in &variants {
                s.rules.extend(v.rules());
                s.modes.insert(v.mode);
            }
            s.variants = variants.len();
            s.failures.extend(outcomes.into_iter().flatten());
            s
        })
        .collect();
    per_fixture.into_iter().fold(Sweep::default(), |mut acc, s| {
        acc.fixtures += s.fixtures;
        acc.variants += s.variants;
        acc.failures.extend(s.failures);
        acc.rules.extend(s.rules);
        acc.modes.extend(s.modes);
        acc
    })
}
