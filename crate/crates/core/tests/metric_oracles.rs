//! Halstead and cyclomatic values derived by hand, and the metric axioms of
//! the edit distance.

mod common;

use common::micro::{micro_programs, reference_distance};
use proptest::prelude::*;
use spt_core::metrics::{cyclomatic, halstead, levenshtein};
use spt_core::parser::parse_text;

#[test]
fn hand_derived_values() {
    for m in micro_programs() {
        let ast = parse_text(m.text).unwrap();
        let got = halstead(&ast);
        assert_eq!(got, m.halstead, "{}", m.text);
        assert!((got.volume() - m.volume).abs() < 1e-9, "{}: {} vs {}", m.text, got.volume(), m.volume);
        assert_eq!(cyclomatic(&ast), m.cyclomatic, "{}", m.text);
    }
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof!["[ab]{0,12}", "[a-z (){};=<>0-9]{0,40}", "\\PC{0,10}"]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn edit_distance_is_a_metric(a in text(), b in text(), c in text()) {
        let ab = levenshtein(&a, &b);
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert_eq!(ab == 0, a == b);
        prop_assert_eq!(ab, levenshtein(&b, &a));
        prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
        prop_assert!(ab >= a.len().abs_diff(b.len()) && ab <= a.len().max(b.len()));
        prop_assert_eq!(ab, reference_distance(a.as_bytes(), b.as_bytes()));
    }
}
