//! The fixtures suit the differential driver, and the validation gates catch
//! injected faults. The full variant sweep runs in the acceptance target.

mod common;

use spt_core::harness::{compile_check, signature, CompilerSpec, DifferentialRunner, Equivalence};
use spt_core::parser::parse_text;

const INPUTS: usize = 256;
const SEED: u64 = 2024;

#[test]
fn fixtures_are_driver_compatible() {
    let fixtures = common::fixtures();
    assert!(fixtures.len() >= 20);
    let cc = CompilerSpec::default();
    for (name, text) in &fixtures {
        let ast = parse_text(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(signature(&ast).is_some(), "{name} is not driver-compatible");
        assert!(compile_check(&cc, text).unwrap(), "{name} does not compile");
    }
}

#[test]
fn negation_without_branch_swap_diverges() {
    let cc = CompilerSpec::default();
    let original = common::fixture("22_pick_branch.c");
    let mutant = original.replace("if (flags & 4)", "if (!(flags & 4))");
    let runner = DifferentialRunner::new(cc, &original, INPUTS, SEED).unwrap();
    match runner.check(&mutant).unwrap() {
        Equivalence::Divergent { input, expected, actual } => {
            assert_eq!(input.len(), 4);
            assert_ne!(expected, actual);
        }
        Equivalence::Equivalent => panic!("mutant not caught"),
    }
}

#[test]
fn corrupted_variant_fails_to_compile() {
    let cc = CompilerSpec::default();
    let broken = common::fixture("01_abs_diff.c").replace("d = b - a;", "d = b - ;");
    assert!(!compile_check(&cc, &broken).unwrap());
}
