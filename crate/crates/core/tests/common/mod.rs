//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod attack;
pub mod fuzz;
pub mod micro;
pub mod paths;
pub mod sweep;

use std::path::PathBuf;

use spt_core::analysis::{candidate_nodes, constraints_valid};
use spt_core::parser::{parse_text, rewrite};
use spt_core::transforms::{apply, TransformRule};

use TransformRule::*;

pub fn wrap(body: &str) -> String {
    format!("void f(int a, int b, int c, int n, int x, int i, int s, int err, int ady, int *p) {{\n{body}\n}}")
}

/// Applies `rule` at its `nth` candidate site inside a wrapped body; `None`
/// when the site's constraints reject it.
pub fn apply_nth(body: &str, rule: TransformRule, nth: usize) -> Option<String> {
    let src = wrap(body);
    let ast = parse_text(&src).unwrap();
    let site = candidate_nodes(&ast, rule)[nth];
    if !constraints_valid(&ast, &site) {
        assert!(apply(&ast, &site).is_err());
        return None;
    }
    let out = rewrite(&src, &apply(&ast, &site).unwrap()).unwrap();
    assert!(parse_text(&out).is_ok(), "variant must re-parse:\n{out}");
    let prefix_len = src.find('\n').unwrap() + 1;
    Some(out[prefix_len..out.len() - 2].to_string())
}

/// (body, rule, expected body after one application at the first site)
pub const GOLDENS: &[(&str, TransformRule, &str)] = &[
    ("int y;\ny = a + b * c;", AssignSplit, "int y;\nint tmp_0 = b * c;\ny = a + tmp_0;"),
    ("  x = a + b * c;", AssignSplit, "  int tmp_0 = b * c;\n  x = a + tmp_0;"),
    ("x = (a - b) * (c + 1);", AssignSplit, "int tmp_0 = a - b;\nx = tmp_0 * (c + 1);"),
    ("int tmp_0; x = a << 2 | b;", AssignSplit, "int tmp_0; int tmp_1 = a << 2; x = tmp_1 | b;"),
    ("i += 1;", CompoundAssignSplit, "i = i + 1;"),
    ("x <<= n + 1;", CompoundAssignSplit, "x = x << (n + 1);"),
    ("p[i] -= (a);", CompoundAssignSplit, "p[i] = p[i] - (a);"),
    ("s^=a*b;", CompoundAssignSplit, "s = s ^ (a*b);"),
    ("while (i < n) { s += i; i++; }", WhileToFor, "for (; i < n; i++) { s += i; }"),
    (
        "while (i < n) { if (s) continue; i++; }",
        WhileToFor,
        "for (; i < n; ) { if (s) continue; i++; }",
    ),
    ("while (1) g();", WhileToFor, "for (; 1; ) g();"),
    ("while (n) {\n  s += n;\n  n--;\n}", WhileToFor, "for (; n; n--) {\n  s += n;\n}"),
    ("while (x) { int k = 1; x -= k; }", WhileToFor, "for (; x; ) { int k = 1; x -= k; }"),
    ("for (i = 0; i < n; i++) s += i;", ForToWhile, "i = 0;\nwhile (i < n) { s += i; i++; }"),
    ("for (;;) g();", ForToWhile, "while (1) g();"),
    (
        "for (int k = 0; k < n; k++) { s += k; }",
        ForToWhile,
        "{ int k = 0; while (k < n) { s += k; k++; } }",
    ),
    (
        "  for (i = 0; i < n; i++) {\n    s += i;\n  }",
        ForToWhile,
        "  i = 0;\n  while (i < n) {\n    s += i;\n    i++;\n  }",
    ),
    ("if (a) for (i = 0; i < 2; ) g();", ForToWhile, "if (a) { i = 0; while (i < 2) g(); }"),
    ("if (x == 0) a = 1; else b = 2;", CondNegate, "if (x != 0) b = 2; else a = 1;"),
    ("if (p && c) a = 1; else b = 2;", CondNegate, "if (!(p && c)) b = 2; else a = 1;"),
    ("double d = 0; if (d < x) a = 1; else b = 2;", CondNegate, "double d = 0; if (!(d < x)) b = 2; else a = 1;"),
    (
        "if (a) { g(); } else if (b) h();",
        CondNegate,
        "if (!(a)) { if (b) h(); } else { g(); }",
    ),
    ("if (a && b) g();", CondSplitAnd, "if (a) { if (b) g(); }"),
    ("if (a && b) g(); else h();", CondSplitAnd, "if (a) { if (b) g(); else h(); } else h();"),
    ("if (a && b && c) { g(); }", CondSplitAnd, "if (a && b) { if (c) { g(); } }"),
    ("if (a || b) g();", CondSplitOr, "if (a) g(); else if (b) g();"),
    ("if (a || b) g(); else h();", CondSplitOr, "if (a) g(); else if (b) g(); else h();"),
    ("if (a || b) if (c) g();", CondSplitOr, "if (a) { if (c) g(); } else if (b) { if (c) g(); }"),
    ("if (err >= 0) g();", CondReorder, "if (0 <= err) g();"),
    ("if (x <= 0) g();", CondReorder, "if (0 >= x) g();"),
    ("if (err + ady >= 0) g();", CondReorder, "if (0 <= err + ady) g();"),
    ("if (a != b && c) g();", CondReorder, "if (b != a && c) g();"),
];

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/functions")
}

/// Every bundled fixture as (file name, text), sorted by name.
pub fn fixtures() -> Vec<(String, String)> {
    let mut files: Vec<_> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "c"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap()
}
