//! Single- and multi-location generation on a three-site fixture, and
//! termination of saturation under rules that re-trigger on their output.

mod common;

use spt_core::composer::{generate_multi_location, generate_single, saturate, ComposeError, GenerationConfig, Mode};
use spt_core::parser::{Edit, Label, NodeKind, SourceUnit};
use spt_core::transforms::TransformRule;

fn three_sites() -> SourceUnit {
    SourceUnit::new(7, common::fixture("07_plot_step.c"), Label::Vulnerable)
}

#[test]
fn one_variant_per_site() {
    let config = GenerationConfig { rules: vec![TransformRule::CondReorder], ..GenerationConfig::default() };
    let variants = generate_single(&three_sites(), &config).unwrap();
    assert_eq!(variants.len(), 3);
    let mirrored = ["0 <= err)", "0 >= x)", "0 <= err + ady)"];
    for (v, m) in variants.iter().zip(mirrored) {
        assert!(v.text.contains(m), "{}", v.text);
        assert_eq!(v.mode, Mode::Single);
        assert_eq!(v.provenance.len(), 1);
    }
}

#[test]
fn saturated_variant_mirrors_every_site() {
    let v = generate_multi_location(&three_sites(), TransformRule::CondReorder).unwrap().unwrap();
    assert_eq!(v.provenance.len(), 3);
    for m in ["if (0 <= err)", "if (0 >= x)", "if (0 <= err + ady)"] {
        assert!(v.text.contains(m), "{}", v.text);
    }
    let ordinals: Vec<_> = v.provenance.iter().map(|a| a.ordinal).collect();
    assert!(ordinals.windows(2).all(|w| w[0] < w[1]));
}

fn return_values(ast: &spt_core::parser::Ast) -> Vec<usize> {
    ast.descendants(ast.root)
        .filter(|&n| ast.kind(n) == NodeKind::ReturnStmt)
        .map(|n| ast.node(ast.children(n)[0]).span.start)
        .collect()
}

#[test]
fn rule_retriggering_in_place_terminates() {
    // `return e;` -> `return 0 + e;` creates a fresh site at the same place every time
    let text = "int f(int a) { if (a) return a; return 1; }";
    let (out, steps) = saturate(
        text,
        return_values,
        |_, pos| Some((vec![Edit::insert(pos, "0 + ")], "prefix".to_string())),
        100,
    )
    .unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(out, "int f(int a) { if (a) return 0 + a; return 0 + 1; }");
}

#[test]
fn rule_creating_later_sites_hits_the_cap() {
    // each application adds another return after the current one
    let text = "int f(int a) { return a; }";
    let err = saturate(
        text,
        return_values,
        |ast, pos| {
            let ret = ast.descendants(ast.root).find(|&n| {
                ast.kind(n) == NodeKind::ReturnStmt && ast.node(ast.children(n)[0]).span.start == pos
            })?;
            Some((vec![Edit::insert(ast.node(ret).span.end, " return a;")], "duplicate".to_string()))
        },
        50,
    )
    .unwrap_err();
    assert_eq!(err, ComposeError::BudgetExceeded { limit: 50 });
}
