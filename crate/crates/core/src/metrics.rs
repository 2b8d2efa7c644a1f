//! Complexity metrics of a function and of a variant relative to its parent.
//!
//! All measures look at the function definition only; the preamble is
//! ignored.
//!
//! Halstead classification:
//!
//! | construct                                   | counted as                  |
//! |---------------------------------------------|-----------------------------|
//! | `if` `else` `while` `for` `do` `switch`     | operator (keyword)          |
//! | `case` `default` `return` `break`           | operator (keyword)          |
//! | `continue` `goto`                           | operator (keyword)          |
//! | binary, assignment, compound assignment     | operator (its token)        |
//! | `=` of an initialized declarator            | operator `=`                |
//! | prefix `-` `+` `*` `&`                      | operators `u-` `u+` `u*` `u&` |
//! | other unary (`!` `~` `++` `--` `sizeof`)    | operator (its token)        |
//! | call                                        | operator `()` once per call |
//! | subscript / member access                   | operators `[]`, `.`, `->`   |
//! | cast / conditional                          | operators `cast`, `?:`      |
//! | identifiers (function name, declarators, labels, fields) | operand        |
//! | literals                                    | operand (by spelling)       |
//! | type names, grouping parentheses, braces, `;`, `,` separators | not counted |
//!
//! Statements the parser keeps opaque are classified token by token with the
//! same table.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpg::{build_cpg, CpgError};
use crate::parser::{parse_text, tokenize, Ast, NodeId, NodeKind, ParseError, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Cpg(#[from] CpgError),
}

/// Lines with at least one non-whitespace character.
pub fn loc(text: &str) -> usize {
    text.lines().filter(|l| !l.trim().is_empty()).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halstead {
    pub distinct_operators: usize,
    pub distinct_operands: usize,
    pub total_operators: usize,
    pub total_operands: usize,
}

impl Halstead {
    pub fn vocabulary(&self) -> usize {
        self.distinct_operators + self.distinct_operands
    }

    pub fn length(&self) -> usize {
        self.total_operators + self.total_operands
    }

    pub fn volume(&self) -> f64 {
        let eta = self.vocabulary();
        if eta <= 1 {
            0.0
        } else {
            self.length() as f64 * (eta as f64).log2()
        }
    }
}

const CONTROL_KEYWORDS: &[&str] = &[
    "if", "else", "while", "for", "do", "switch", "case", "default", "return", "break", "continue", "goto",
];

#[derive(Default)]
struct Tally {
    operators: Vec<String>,
    operands: Vec<String>,
}

impl Tally {
    fn op(&mut self, s: &str) {
        self.operators.push(s.to_string());
    }

    fn operand(&mut self, s: &str) {
        self.operands.push(s.to_string());
    }

    fn opaque(&mut self, text: &str) {
        let Ok(toks) = tokenize(text) else { return };
        for t in toks {
            let s = &text[t.span.start..t.span.end];
            match t.kind {
                TokenKind::Ident if CONTROL_KEYWORDS.contains(&s) => self.op(s),
                TokenKind::Ident if crate::parser::is_c_keyword(s) => {}
                TokenKind::Ident | TokenKind::Number | TokenKind::Char | TokenKind::Str => self.operand(s),
                TokenKind::Punct if !matches!(s, "(" | ")" | "{" | "}" | ";" | ",") => self.op(s),
                _ => {}
            }
        }
    }

    fn node(&mut self, ast: &Ast, id: NodeId) {
        let node = ast.node(id);
        match node.kind {
            NodeKind::IfStmt => {
                self.op("if");
                if node.children.len() == 3 {
                    self.op("else");
                }
            }
            NodeKind::WhileStmt => self.op("while"),
            NodeKind::ForStmt => self.op("for"),
            NodeKind::DoWhileStmt => {
                self.op("do");
                self.op("while");
            }
            NodeKind::SwitchStmt => self.op("switch"),
            NodeKind::CaseLabel => self.op(node.op()),
            NodeKind::ReturnStmt => self.op("return"),
            NodeKind::BreakStmt => self.op("break"),
            NodeKind::ContinueStmt => self.op("continue"),
            NodeKind::GotoStmt => {
                self.op("goto");
                self.operand(node.op());
            }
            NodeKind::LabelStmt => self.operand(node.op()),
            NodeKind::DeclStmt => {
                for pair in node.children.windows(2) {
                    let next_is_declarator =
                        ast.kind(pair[1]) == NodeKind::Identifier && ast.node(pair[1]).type_text.is_some();
                    if ast.node(pair[0]).type_text.is_some() && !next_is_declarator {
                        self.op("=");
                    }
                }
            }
            NodeKind::AssignExpr | NodeKind::CompoundAssignExpr | NodeKind::BinaryExpr => self.op(node.op()),
            NodeKind::UnaryExpr => match node.op() {
                op @ ("-" | "+" | "*" | "&") => self.op(&format!("u{op}")),
                op => self.op(op),
            },
            NodeKind::TernaryExpr => self.op("?:"),
            NodeKind::CallExpr => self.op("()"),
            NodeKind::IndexExpr => self.op("[]"),
            NodeKind::MemberExpr => self.op(node.op()),
            NodeKind::CastExpr => self.op("cast"),
            NodeKind::Identifier | NodeKind::Literal => self.operand(ast.text(id)),
            NodeKind::OpaqueStmt => self.opaque(ast.text(id)),
            NodeKind::FunctionDef
            | NodeKind::ParamList
            | NodeKind::CompoundStmt
            | NodeKind::ExprStmt
            | NodeKind::ParenExpr => {}
        }
    }
}

pub fn halstead(ast: &Ast) -> Halstead {
    let mut t = Tally::default();
    for id in ast.descendants(ast.root) {
        t.node(ast, id);
    }
    let distinct = |v: &[String]| v.iter().collect::<HashSet<_>>().len();
    Halstead {
        distinct_operators: distinct(&t.operators),
        distinct_operands: distinct(&t.operands),
        total_operators: t.operators.len(),
        total_operands: t.operands.len(),
    }
}

pub fn halstead_volume(ast: &Ast) -> f64 {
    halstead(ast).volume()
}

/// 1 + decision points: `if`, loops, `case` labels, `?:`, `&&`, `||`.
/// `default` is not a decision of its own.
pub fn cyclomatic(ast: &Ast) -> usize {
    let mut n = 1;
    for id in ast.descendants(ast.root) {
        let node = ast.node(id);
        n += match node.kind {
            NodeKind::IfStmt | NodeKind::WhileStmt | NodeKind::ForStmt | NodeKind::DoWhileStmt => 1,
            NodeKind::CaseLabel => usize::from(node.op() == "case"),
            NodeKind::TernaryExpr => 1,
            NodeKind::BinaryExpr => usize::from(matches!(node.op(), "&&" | "||")),
            NodeKind::OpaqueStmt => {
                let text = ast.text(id);
                tokenize(text).map_or(0, |toks| {
                    toks.iter()
                        .filter(|t| matches!(&text[t.span.start..t.span.end], "if" | "while" | "for" | "case" | "?" | "&&" | "||"))
                        .count()
                })
            }
            _ => 0,
        };
    }
    n
}

/// Byte-level edit distance with unit costs, two rows of memory.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    a = &a[prefix..];
    b = &b[prefix..];
    let suffix = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    a = &a[..a.len() - suffix];
    b = &b[..b.len() - suffix];
    if a.len() < b.len() {
        std::mem::swap(&mut a, &mut b);
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The four per-function measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub loc: usize,
    pub halstead_volume: f64,
    pub cyclomatic: usize,
    pub avg_cpg_degree: f64,
}

pub fn measure(ast: &Ast) -> Result<Measures, MetricsError> {
    Ok(Measures {
        loc: loc(ast.function_text()),
        halstead_volume: halstead_volume(ast),
        cyclomatic: cyclomatic(ast),
        avg_cpg_degree: build_cpg(ast)?.average_degree(),
    })
}

fn percent(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| (after - before) / before * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub loc: usize,
    pub halstead_volume: f64,
    pub cyclomatic: usize,
    pub avg_cpg_degree: f64,
    pub edit_distance: usize,
    pub delta_loc: Option<f64>,
    pub delta_halstead_volume: Option<f64>,
    pub delta_cyclomatic: Option<f64>,
    pub delta_avg_cpg_degree: Option<f64>,
}

/// Measures of `variant` plus percent changes relative to `reference`.
pub fn report(reference: &str, variant: &str) -> Result<MetricsReport, MetricsError> {
    let (ra, va) = (parse_text(reference)?, parse_text(variant)?);
    let (r, v) = (measure(&ra)?, measure(&va)?);
    Ok(MetricsReport {
        loc: v.loc,
        halstead_volume: v.halstead_volume,
        cyclomatic: v.cyclomatic,
        avg_cpg_degree: v.avg_cpg_degree,
        edit_distance: levenshtein(ra.function_text(), va.function_text()),
        delta_loc: percent(r.loc as f64, v.loc as f64),
        delta_halstead_volume: percent(r.halstead_volume, v.halstead_volume),
        delta_cyclomatic: percent(r.cyclomatic as f64, v.cyclomatic as f64),
        delta_avg_cpg_degree: percent(r.avg_cpg_degree, v.avg_cpg_degree),
    })
}
