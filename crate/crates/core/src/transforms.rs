//! The eight rewrite rules, each producing an edit list against the original
//! bytes of the function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    constraint_set, deepest_binary, declared_integer_type, ends_with_open_if, fresh_temp_name,
    is_comparison, is_integer_literal, own_continues, paren_wrapped, Site,
};
use crate::parser::{expr_precedence, skip_trivia, tokenize, Ast, Edit, NodeId, NodeKind, Span, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformRule {
    AssignSplit,
    CompoundAssignSplit,
    WhileToFor,
    ForToWhile,
    CondNegate,
    CondSplitAnd,
    CondSplitOr,
    CondReorder,
}

impl TransformRule {
    pub const ALL: [TransformRule; 8] = [
        TransformRule::AssignSplit,
        TransformRule::CompoundAssignSplit,
        TransformRule::WhileToFor,
        TransformRule::ForToWhile,
        TransformRule::CondNegate,
        TransformRule::CondSplitAnd,
        TransformRule::CondSplitOr,
        TransformRule::CondReorder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformRule::AssignSplit => "assign-split",
            TransformRule::CompoundAssignSplit => "compound-assign-split",
            TransformRule::WhileToFor => "while-to-for",
            TransformRule::ForToWhile => "for-to-while",
            TransformRule::CondNegate => "cond-negate",
            TransformRule::CondSplitAnd => "cond-split-and",
            TransformRule::CondSplitOr => "cond-split-or",
            TransformRule::CondReorder => "cond-reorder",
        }
    }
}

impl fmt::Display for TransformRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown rule `{0}`")]
pub struct UnknownRule(pub String);

impl FromStr for TransformRule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransformRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("{rule} is not applicable here: {predicate}")]
    Inapplicable { rule: TransformRule, predicate: &'static str },
}

fn check(ast: &Ast, site: &Site, rule: TransformRule) -> Result<(), TransformError> {
    let inapplicable = |predicate| TransformError::Inapplicable { rule, predicate };
    if site.rule != rule || !crate::analysis::candidate_nodes(ast, rule).iter().any(|s| s.node == site.node) {
        return Err(inapplicable("site-pattern"));
    }
    match constraint_set(rule).first_failure(ast, site.node) {
        Some(p) => Err(inapplicable(p)),
        None => Ok(()),
    }
}

/// Edit list for `site` under its own rule.
pub fn apply(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    match site.rule {
        TransformRule::AssignSplit => apply_assign_split(ast, site),
        TransformRule::CompoundAssignSplit => apply_compound_assign_split(ast, site),
        TransformRule::WhileToFor => apply_while_to_for(ast, site),
        TransformRule::ForToWhile => apply_for_to_while(ast, site),
        TransformRule::CondNegate => apply_cond_negate(ast, site),
        TransformRule::CondSplitAnd => apply_cond_split_and(ast, site),
        TransformRule::CondSplitOr => apply_cond_split_or(ast, site),
        TransformRule::CondReorder => apply_cond_reorder(ast, site),
    }
}

/// Short human-readable label for a site: the first line of its text.
pub fn describe_site(ast: &Ast, site: &Site) -> String {
    let text = ast.text(site.node);
    let line = text.lines().next().unwrap_or("").trim();
    let mut short: String = line.chars().take(60).collect();
    if short.len() < line.len() || text.contains('\n') {
        short.push_str(" ...");
    }
    short
}

// ---- layout helpers ---------------------------------------------------------

fn line_start(src: &str, pos: usize) -> usize {
    src[..pos].rfind('\n').map_or(0, |i| i + 1)
}

fn indent_at(src: &str, pos: usize) -> &str {
    let ls = line_start(src, pos);
    let line = &src[ls..];
    let n = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[..n]
}

fn first_on_line(src: &str, pos: usize) -> bool {
    src[line_start(src, pos)..pos].trim().is_empty()
}

/// Separator placed before a statement inserted ahead of the one at `pos`.
fn statement_separator(src: &str, pos: usize) -> String {
    if first_on_line(src, pos) {
        format!("\n{}", indent_at(src, pos))
    } else {
        " ".to_string()
    }
}

fn same_line(src: &str, a: usize, b: usize) -> bool {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    !src[lo..hi].contains('\n')
}

fn span(ast: &Ast, id: NodeId) -> Span {
    ast.node(id).span
}

fn braced(ast: &Ast, stmt: NodeId) -> String {
    if ast.kind(stmt) == NodeKind::CompoundStmt {
        ast.text(stmt).to_string()
    } else {
        format!("{{ {} }}", ast.text(stmt))
    }
}

// ---- rules ------------------------------------------------------------------

pub fn apply_assign_split(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::AssignSplit)?;
    let src = ast.source.as_str();
    let stmt = site.node;
    let assign = ast.children(stmt)[0];
    let (lhs, rhs) = (ast.children(assign)[0], ast.children(assign)[1]);
    let ty = declared_integer_type(ast, ast.text(lhs)).expect("checked by constraints");
    let ty: Vec<&str> = ty.split_whitespace().filter(|w| *w != "const").collect();
    let sub = deepest_binary(ast, rhs).expect("checked by constraints");
    let replaced = paren_wrapped(ast, sub);
    let tmp = fresh_temp_name(ast);
    let start = span(ast, stmt).start;
    let decl = format!("{} {tmp} = {};{}", ty.join(" "), ast.text(sub), statement_separator(src, start));
    Ok(vec![Edit::insert(start, decl), Edit::replace(span(ast, replaced), tmp)])
}

pub fn apply_compound_assign_split(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::CompoundAssignSplit)?;
    let node = site.node;
    let (lv, e) = (ast.children(node)[0], ast.children(node)[1]);
    let op = ast.node(node).op().trim_end_matches('=');
    let needs_parens = !matches!(ast.kind(e), NodeKind::Identifier | NodeKind::Literal | NodeKind::ParenExpr);
    let gap = Span::new(span(ast, lv).end, span(ast, e).start);
    let mut head = format!(" = {} {op} ", ast.text(lv));
    if needs_parens {
        head.push('(');
    }
    let mut edits = vec![Edit::replace(gap, head)];
    if needs_parens {
        edits.push(Edit::insert(span(ast, e).end, ")"));
    }
    Ok(edits)
}

/// Last body statement of a while loop that can become the `for` update
/// clause, if there is one.
pub fn hoistable_update(ast: &Ast, while_id: NodeId) -> Option<NodeId> {
    let (cond, body) = (ast.children(while_id)[0], ast.children(while_id)[1]);
    if ast.kind(body) != NodeKind::CompoundStmt || !own_continues(ast, while_id).is_empty() {
        return None;
    }
    let last = *ast.children(body).last()?;
    if ast.kind(last) != NodeKind::ExprStmt || ast.children(last).is_empty() {
        return None;
    }
    let expr = ast.children(last)[0];
    let written = match ast.kind(expr) {
        NodeKind::AssignExpr | NodeKind::CompoundAssignExpr => ast.children(expr)[0],
        NodeKind::UnaryExpr if matches!(ast.node(expr).op(), "++" | "--") => ast.children(expr)[0],
        _ => return None,
    };
    if ast.kind(written) != NodeKind::Identifier {
        return None;
    }
    // exactly one write in the whole statement
    let writes = ast
        .descendants(expr)
        .filter(|&n| match ast.kind(n) {
            NodeKind::AssignExpr | NodeKind::CompoundAssignExpr | NodeKind::CallExpr | NodeKind::OpaqueStmt => true,
            NodeKind::UnaryExpr => matches!(ast.node(n).op(), "++" | "--"),
            _ => false,
        })
        .count();
    if writes != 1 {
        return None;
    }
    let name = ast.text(written);
    let in_cond = ast
        .descendants(cond)
        .any(|n| ast.kind(n) == NodeKind::Identifier && ast.text(n) == name);
    if !in_cond {
        return None;
    }
    // names in the update must not resolve to declarations inside the body
    let body_decls: Vec<&str> = ast
        .children(body)
        .iter()
        .filter(|&&s| ast.kind(s) == NodeKind::DeclStmt)
        .flat_map(|&s| ast.children(s).iter())
        .filter(|&&c| ast.kind(c) == NodeKind::Identifier && ast.node(c).type_text.is_some())
        .map(|&c| ast.text(c))
        .collect();
    let shadowed = ast
        .descendants(expr)
        .any(|n| ast.kind(n) == NodeKind::Identifier && body_decls.contains(&ast.text(n)));
    (!shadowed).then_some(last)
}

/// Byte offset of the `)` closing a loop or `if` header, given the end of
/// the last expression inside it.
fn closing_paren(src: &str, after: usize) -> usize {
    let p = skip_trivia(src, after);
    debug_assert_eq!(&src[p..p + 1], ")");
    p
}

pub fn apply_while_to_for(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::WhileToFor)?;
    let src = ast.source.as_str();
    let node = site.node;
    let (cond, body) = (ast.children(node)[0], ast.children(node)[1]);
    let start = span(ast, node).start;
    let lparen = skip_trivia(src, start + "while".len());
    let rparen = closing_paren(src, span(ast, cond).end);
    let mut edits = vec![Edit::replace(Span::new(start, lparen + 1), "for (; ")];
    match hoistable_update(ast, node) {
        Some(upd) => {
            let upd_expr = ast.children(upd)[0];
            edits.push(Edit::replace(Span::new(rparen, rparen + 1), format!("; {})", ast.text(upd_expr))));
            let stmts = ast.children(body);
            let from = match stmts.len() {
                1 => span(ast, body).start + 1,
                n => span(ast, stmts[n - 2]).end,
            };
            edits.push(Edit::delete(Span::new(from, span(ast, upd).end)));
        }
        None => edits.push(Edit::replace(Span::new(rparen, rparen + 1), "; )")),
    }
    Ok(edits)
}

pub fn apply_for_to_while(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::ForToWhile)?;
    let src = ast.source.as_str();
    let node = site.node;
    let clauses = ast.for_clauses(node);
    let body = *ast.children(node).last().expect("for body");
    let start = span(ast, node).start;
    let header_end = tokenize(&src[start..span(ast, body).start])
        .ok()
        .and_then(|toks| {
            toks.iter()
                .rev()
                .find(|t| t.kind == TokenKind::Punct && &src[start + t.span.start..start + t.span.end] == ")")
                .map(|t| start + t.span.end)
        })
        .expect("for header ends with `)`");
    let cond = clauses.cond.map_or("1", |c| ast.text(c));
    let parent_is_block = ast.parent(node).is_some_and(|p| ast.kind(p) == NodeKind::CompoundStmt);

    let mut header = String::new();
    let mut close_block = false;
    match clauses.init {
        Some(init) if ast.kind(init) == NodeKind::DeclStmt => {
            header.push_str(&format!("{{ {} ", ast.text(init)));
            close_block = true;
        }
        Some(init) => {
            if parent_is_block {
                header.push_str(&format!("{};{}", ast.text(init), statement_separator(src, start)));
            } else {
                header.push_str(&format!("{{ {}; ", ast.text(init)));
                close_block = true;
            }
        }
        None => {}
    }
    header.push_str(&format!("while ({cond})"));
    let mut edits = vec![Edit::replace(Span::new(start, header_end), header)];

    let body_span = span(ast, body);
    let closer = if close_block { " }" } else { "" };
    match clauses.update {
        Some(upd) => {
            let upd = ast.text(upd);
            let stmts = ast.children(body);
            if ast.kind(body) != NodeKind::CompoundStmt {
                edits.push(Edit::replace(body_span, format!("{{ {} {upd}; }}{closer}", ast.text(body))));
            } else if let Some(&last) = stmts.last() {
                let last_end = span(ast, last).end;
                let sep = if same_line(src, last_end, body_span.end - 1) {
                    " ".to_string()
                } else {
                    format!("\n{}", indent_at(src, span(ast, last).start))
                };
                edits.push(Edit::insert(last_end, format!("{sep}{upd};")));
                if close_block {
                    edits.push(Edit::insert(body_span.end, closer));
                }
            } else {
                edits.push(Edit::replace(body_span, format!("{{ {upd}; }}{closer}")));
            }
        }
        None if close_block => edits.push(Edit::insert(body_span.end, closer)),
        None => {}
    }
    Ok(edits)
}

fn negated_operator(op: &str) -> Option<&'static str> {
    Some(match op {
        "==" => "!=",
        "!=" => "==",
        "<" => ">=",
        ">=" => "<",
        ">" => "<=",
        "<=" => ">",
        _ => return None,
    })
}

fn mirrored_operator(op: &str) -> &'static str {
    match op {
        "<" => ">",
        ">" => "<",
        "<=" => ">=",
        ">=" => "<=",
        "==" => "==",
        "!=" => "!=",
        _ => unreachable!("not a comparison: {op}"),
    }
}

fn integer_operand(ast: &Ast, id: NodeId) -> bool {
    match ast.kind(id) {
        NodeKind::Identifier => declared_integer_type(ast, ast.text(id)).is_some(),
        NodeKind::Literal => is_integer_literal(ast, id),
        _ => false,
    }
}

/// Span of the operator token of a binary node.
fn operator_span(ast: &Ast, bin: NodeId) -> Span {
    let lhs_end = span(ast, ast.children(bin)[0]).end;
    let at = skip_trivia(&ast.source, lhs_end);
    Span::new(at, at + ast.node(bin).op().len())
}

pub fn apply_cond_negate(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::CondNegate)?;
    let (cond, then, els) = ast.if_parts(site.node);
    let els = els.expect("checked by constraints");
    let c = ast.node(cond);
    let mut edits = Vec::new();
    let mirrored = (c.kind == NodeKind::BinaryExpr && is_comparison(c.op()))
        .then(|| negated_operator(c.op()))
        .flatten()
        .filter(|_| c.children.iter().all(|&o| integer_operand(ast, o)));
    match mirrored {
        Some(neg) => edits.push(Edit::replace(operator_span(ast, cond), neg)),
        None => {
            edits.push(Edit::insert(c.span.start, "!("));
            edits.push(Edit::insert(c.span.end, ")"));
        }
    }
    let new_then = if ast.kind(els) == NodeKind::IfStmt || ends_with_open_if(ast, els) {
        braced(ast, els)
    } else {
        ast.text(els).to_string()
    };
    edits.push(Edit::replace(span(ast, then), new_then));
    edits.push(Edit::replace(span(ast, els), ast.text(then)));
    Ok(edits)
}

pub fn apply_cond_split_and(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::CondSplitAnd)?;
    let (cond, then, els) = ast.if_parts(site.node);
    let (a, b) = (ast.children(cond)[0], ast.children(cond)[1]);
    let inner = match els {
        None => format!("{{ if ({}) {} }}", ast.text(b), ast.text(then)),
        Some(e) => format!("{{ if ({}) {} else {} }}", ast.text(b), ast.text(then), ast.text(e)),
    };
    Ok(vec![
        Edit::delete(Span::new(span(ast, a).end, span(ast, b).end)),
        Edit::replace(span(ast, then), inner),
    ])
}

pub fn apply_cond_split_or(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::CondSplitOr)?;
    let (cond, then, _) = ast.if_parts(site.node);
    let (a, b) = (ast.children(cond)[0], ast.children(cond)[1]);
    let s = if ends_with_open_if(ast, then) {
        braced(ast, then)
    } else {
        ast.text(then).to_string()
    };
    Ok(vec![
        Edit::delete(Span::new(span(ast, a).end, span(ast, b).end)),
        Edit::replace(span(ast, then), format!("{s} else if ({}) {s}", ast.text(b))),
    ])
}

pub fn apply_cond_reorder(ast: &Ast, site: &Site) -> Result<Vec<Edit>, TransformError> {
    check(ast, site, TransformRule::CondReorder)?;
    let node = site.node;
    let (l, r) = (ast.children(node)[0], ast.children(node)[1]);
    let prec = expr_precedence(ast, node);
    let moved = |id: NodeId| {
        if expr_precedence(ast, id) <= prec {
            format!("({})", ast.text(id))
        } else {
            ast.text(id).to_string()
        }
    };
    Ok(vec![
        Edit::replace(span(ast, l), moved(r)),
        Edit::replace(operator_span(ast, node), mirrored_operator(ast.node(node).op())),
        Edit::replace(span(ast, r), moved(l)),
    ])
}
