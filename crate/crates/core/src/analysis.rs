//! Site localization and the per-rule constraint catalog.
//!
//! `candidate_nodes` only pattern-matches node kinds; whether a rewrite at a
//! candidate is semantics-preserving is decided by `constraints_valid`, which
//! evaluates the rule's named predicates. The catalog is versioned so that
//! applicability numbers can be compared across releases.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::parser::{Ast, NodeId, NodeKind};
use crate::transforms::TransformRule;

/// Bumped whenever a predicate is added, removed or changes meaning.
pub const CONSTRAINT_CATALOG_VERSION: u32 = 1;

/// A place where `rule` may be applied. `ordinal` is the byte offset of the
/// site node's span start and orders sites within one text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub node: NodeId,
    pub rule: TransformRule,
    pub ordinal: usize,
}

pub struct Predicate {
    pub name: &'static str,
    pub check: fn(&Ast, NodeId) -> bool,
}

pub struct ConstraintSet {
    pub rule: TransformRule,
    pub predicates: &'static [Predicate],
}

impl ConstraintSet {
    /// Name of the first failing predicate, if any.
    pub fn first_failure(&self, ast: &Ast, node: NodeId) -> Option<&'static str> {
        self.predicates.iter().find(|p| !(p.check)(ast, node)).map(|p| p.name)
    }
}

pub fn has_side_effects(ast: &Ast, id: NodeId) -> bool {
    ast.descendants(id).any(|n| {
        let node = ast.node(n);
        match node.kind {
            NodeKind::AssignExpr | NodeKind::CompoundAssignExpr | NodeKind::CallExpr | NodeKind::OpaqueStmt => true,
            NodeKind::UnaryExpr => matches!(node.op(), "++" | "--"),
            _ => false,
        }
    })
}

pub fn is_comparison(op: &str) -> bool {
    matches!(op, "<" | "<=" | ">" | ">=" | "==" | "!=")
}

fn in_if_condition(ast: &Ast, id: NodeId) -> bool {
    let mut cur = id;
    while let Some(p) = ast.parent(cur) {
        let kind = ast.kind(p);
        if kind == NodeKind::IfStmt {
            return ast.children(p)[0] == cur;
        }
        if kind.is_statement() || kind == NodeKind::FunctionDef {
            return false;
        }
        cur = p;
    }
    false
}

fn matches_pattern(ast: &Ast, id: NodeId, rule: TransformRule) -> bool {
    let node = ast.node(id);
    match rule {
        TransformRule::AssignSplit => {
            node.kind == NodeKind::ExprStmt
                && node.children.len() == 1
                && ast.kind(node.children[0]) == NodeKind::AssignExpr
        }
        TransformRule::CompoundAssignSplit => node.kind == NodeKind::CompoundAssignExpr,
        TransformRule::WhileToFor => node.kind == NodeKind::WhileStmt,
        TransformRule::ForToWhile => node.kind == NodeKind::ForStmt,
        TransformRule::CondNegate | TransformRule::CondSplitAnd | TransformRule::CondSplitOr => {
            node.kind == NodeKind::IfStmt
        }
        TransformRule::CondReorder => {
            node.kind == NodeKind::BinaryExpr && is_comparison(node.op()) && in_if_condition(ast, id)
        }
    }
}

/// Every node matching the rule's pattern, in strictly increasing ordinal
/// order. When two candidates share a start offset (unparenthesized chained
/// comparisons) only the outermost is kept.
pub fn candidate_nodes(ast: &Ast, rule: TransformRule) -> Vec<Site> {
    let mut sites: Vec<Site> = ast
        .descendants(ast.root)
        .filter(|&id| matches_pattern(ast, id, rule))
        .map(|id| Site { node: id, rule, ordinal: ast.node(id).span.start })
        .collect();
    // Preorder visits outer nodes first, so a stable sort keeps them ahead.
    sites.sort_by_key(|s| s.ordinal);
    sites.dedup_by_key(|s| s.ordinal);
    sites
}

pub fn constraints_valid(ast: &Ast, site: &Site) -> bool {
    matches_pattern(ast, site.node, site.rule)
        && constraint_set(site.rule).first_failure(ast, site.node).is_none()
}

/// Candidates that also pass the rule's constraints.
pub fn valid_sites(ast: &Ast, rule: TransformRule) -> Vec<Site> {
    candidate_nodes(ast, rule).into_iter().filter(|s| constraints_valid(ast, s)).collect()
}

// ---- declared types ---------------------------------------------------------

const STORAGE_WORDS: &[&str] = &["static", "register", "auto", "extern", "inline"];

/// Integer types after the usual promotions, assuming an LP64 target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntType {
    Int,
    UInt,
    Long,
    ULong,
    LongLong,
    ULongLong,
}

impl IntType {
    fn rank(self) -> u8 {
        match self {
            IntType::Int | IntType::UInt => 1,
            IntType::Long | IntType::ULong => 2,
            IntType::LongLong | IntType::ULongLong => 3,
        }
    }

    pub fn is_signed(self) -> bool {
        matches!(self, IntType::Int | IntType::Long | IntType::LongLong)
    }

    pub fn bits(self) -> u32 {
        match self {
            IntType::Int | IntType::UInt => 32,
            _ => 64,
        }
    }

    fn to_unsigned(self) -> IntType {
        match self {
            IntType::Int | IntType::UInt => IntType::UInt,
            IntType::Long | IntType::ULong => IntType::ULong,
            IntType::LongLong | IntType::ULongLong => IntType::ULongLong,
        }
    }

    /// Usual arithmetic conversions between two promoted integer types.
    pub fn common(a: IntType, b: IntType) -> IntType {
        if a == b {
            return a;
        }
        if a.is_signed() == b.is_signed() {
            return if a.rank() >= b.rank() { a } else { b };
        }
        let (s, u) = if a.is_signed() { (a, b) } else { (b, a) };
        if u.rank() >= s.rank() {
            u
        } else if s.bits() > u.bits() {
            s
        } else {
            s.to_unsigned()
        }
    }

    /// Parses a declared integer type; the flag is true for `char`/`short`
    /// families, which promote to `int` in expressions.
    pub fn from_type_text(text: &str) -> Option<(IntType, bool)> {
        let mut unsigned = false;
        let mut signed = false;
        let (mut chars, mut shorts, mut ints, mut longs) = (0, 0, 0, 0);
        for w in text.split_whitespace() {
            match w {
                "unsigned" => unsigned = true,
                "signed" => signed = true,
                "char" => chars += 1,
                "short" => shorts += 1,
                "int" => ints += 1,
                "long" => longs += 1,
                "const" => {}
                w if STORAGE_WORDS.contains(&w) => {}
                _ => return None,
            }
        }
        if (unsigned && signed) || chars > 1 || shorts > 1 || ints > 1 || longs > 2 {
            return None;
        }
        if chars + shorts + ints + longs == 0 && !unsigned && !signed {
            return None;
        }
        if chars == 1 {
            return (shorts + ints + longs == 0).then_some((IntType::Int, true));
        }
        if shorts == 1 {
            return (longs == 0).then_some((IntType::Int, true));
        }
        let t = match (longs, unsigned) {
            (0, false) => IntType::Int,
            (0, true) => IntType::UInt,
            (1, false) => IntType::Long,
            (1, true) => IntType::ULong,
            (_, false) => IntType::LongLong,
            (_, true) => IntType::ULongLong,
        };
        Some((t, false))
    }

    pub fn max_value(self) -> u128 {
        if self.is_signed() {
            (1u128 << (self.bits() - 1)) - 1
        } else {
            (1u128 << self.bits()) - 1
        }
    }
}

/// Declared type of `name` inside the function if it is a standard integer
/// type (storage-class words removed); `None` for pointers, floating types,
/// typedefs, volatile objects, conflicting redeclarations and globals.
pub fn declared_integer_type(ast: &Ast, name: &str) -> Option<String> {
    let mut found: Option<String> = None;
    for id in ast.descendants(ast.root) {
        let node = ast.node(id);
        if node.kind != NodeKind::Identifier || ast.text(id) != name {
            continue;
        }
        let Some(ty) = node.type_text.as_deref() else { continue };
        let is_decl = matches!(ast.parent(id).map(|p| ast.kind(p)), Some(NodeKind::ParamList | NodeKind::DeclStmt));
        if !is_decl {
            continue;
        }
        IntType::from_type_text(ty)?;
        let normalized = ty
            .split_whitespace()
            .filter(|w| !STORAGE_WORDS.contains(w))
            .collect::<Vec<_>>()
            .join(" ");
        match &found {
            Some(prev) if *prev != normalized => return None,
            _ => found = Some(normalized),
        }
    }
    found
}

fn declared_int(ast: &Ast, name: &str) -> Option<(IntType, bool)> {
    declared_integer_type(ast, name).and_then(|t| IntType::from_type_text(&t))
}

/// C type of an integer literal token (decimal, octal, hex, char).
pub fn literal_int_type(text: &str) -> Option<IntType> {
    if text.starts_with('\'') {
        return Some(IntType::Int);
    }
    let lower = text.to_ascii_lowercase();
    let digits_end = lower.trim_end_matches(['u', 'l']).len();
    let (digits, suffix) = lower.split_at(digits_end);
    let (radix, body, decimal) = if let Some(h) = digits.strip_prefix("0x") {
        (16, h, false)
    } else if digits.len() > 1 && digits.starts_with('0') {
        (8, &digits[1..], false)
    } else {
        (10, digits, true)
    };
    let value = u128::from_str_radix(body, radix).ok()?;
    let unsigned = suffix.contains('u');
    let longs = suffix.matches('l').count();
    if longs > 2 || suffix.len() - longs > 1 {
        return None;
    }
    let ladder: &[IntType] = match (unsigned, longs, decimal) {
        (false, 0, true) => &[IntType::Int, IntType::Long, IntType::LongLong],
        (false, 0, false) => &[IntType::Int, IntType::UInt, IntType::Long, IntType::ULong, IntType::LongLong, IntType::ULongLong],
        (true, 0, _) => &[IntType::UInt, IntType::ULong, IntType::ULongLong],
        (false, 1, true) => &[IntType::Long, IntType::LongLong],
        (false, 1, false) => &[IntType::Long, IntType::ULong, IntType::LongLong, IntType::ULongLong],
        (true, 1, _) => &[IntType::ULong, IntType::ULongLong],
        (false, _, true) => &[IntType::LongLong],
        (false, _, false) => &[IntType::LongLong, IntType::ULongLong],
        (true, _, _) => &[IntType::ULongLong],
    };
    ladder.iter().copied().find(|t| value <= t.max_value())
}

pub fn is_integer_literal(ast: &Ast, id: NodeId) -> bool {
    ast.kind(id) == NodeKind::Literal && literal_int_type(ast.text(id)).is_some()
}

pub(crate) const SPLITTABLE_OPS: &[&str] = &["+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>"];

/// Integer type of an arithmetic expression over integer identifiers and
/// literals, `None` if the expression leaves that fragment.
pub fn int_expr_type(ast: &Ast, id: NodeId) -> Option<IntType> {
    let node = ast.node(id);
    match node.kind {
        NodeKind::Identifier => declared_int(ast, ast.text(id)).map(|t| t.0),
        NodeKind::Literal => literal_int_type(ast.text(id)),
        NodeKind::ParenExpr => int_expr_type(ast, node.children[0]),
        NodeKind::BinaryExpr if SPLITTABLE_OPS.contains(&node.op()) => {
            let l = int_expr_type(ast, node.children[0])?;
            let r = int_expr_type(ast, node.children[1])?;
            if matches!(node.op(), "<<" | ">>") {
                Some(l)
            } else {
                Some(IntType::common(l, r))
            }
        }
        _ => None,
    }
}

// ---- structural helpers -----------------------------------------------------

pub fn strip_parens(ast: &Ast, mut id: NodeId) -> NodeId {
    while ast.kind(id) == NodeKind::ParenExpr {
        id = ast.children(id)[0];
    }
    id
}

/// Outermost chain of parentheses directly wrapping `id`.
pub fn paren_wrapped(ast: &Ast, mut id: NodeId) -> NodeId {
    while let Some(p) = ast.parent(id) {
        if ast.kind(p) != NodeKind::ParenExpr {
            break;
        }
        id = p;
    }
    id
}

pub fn contains_label(ast: &Ast, id: NodeId) -> bool {
    ast.descendants(id).any(|n| ast.kind(n) == NodeKind::LabelStmt)
}

/// A `case`/`default` label inside `id` whose switch lies outside `id`.
pub fn contains_foreign_case(ast: &Ast, id: NodeId) -> bool {
    ast.descendants(id).any(|n| {
        ast.kind(n) == NodeKind::CaseLabel
            && !ast
                .ancestors(n)
                .take_while(|&a| a != id)
                .any(|a| ast.kind(a) == NodeKind::SwitchStmt)
    })
}

fn jump_targets_inside(ast: &Ast, id: NodeId) -> bool {
    contains_label(ast, id) || contains_foreign_case(ast, id)
}

pub fn contains_static_decl(ast: &Ast, id: NodeId) -> bool {
    ast.descendants(id).any(|n| {
        ast.kind(n) == NodeKind::DeclStmt
            && ast.node(n).type_text.as_deref().is_some_and(|t| t.split_whitespace().any(|w| w == "static"))
    })
}

/// `continue` statements that target `loop_id` (not a nested loop).
pub fn own_continues(ast: &Ast, loop_id: NodeId) -> Vec<NodeId> {
    ast.descendants(loop_id)
        .filter(|&n| ast.kind(n) == NodeKind::ContinueStmt)
        .filter(|&n| ast.ancestors(n).find(|&a| ast.kind(a).is_loop()) == Some(loop_id))
        .collect()
}

/// True when `stmt` ends in an `if` without `else`, so that an `else` placed
/// right after it would bind to that inner `if`.
pub fn ends_with_open_if(ast: &Ast, stmt: NodeId) -> bool {
    let node = ast.node(stmt);
    match node.kind {
        NodeKind::IfStmt => match node.children.get(2) {
            None => true,
            Some(&e) => ends_with_open_if(ast, e),
        },
        NodeKind::WhileStmt | NodeKind::ForStmt | NodeKind::SwitchStmt | NodeKind::LabelStmt => {
            node.children.last().is_some_and(|&c| ends_with_open_if(ast, c))
        }
        NodeKind::CaseLabel => node
            .children
            .last()
            .is_some_and(|&c| ast.kind(c).is_statement() && ends_with_open_if(ast, c)),
        _ => false,
    }
}

/// Identifier names used anywhere in the text (preamble included), plus any
/// identifier-shaped tokens inside opaque regions.
pub fn identifier_names(ast: &Ast) -> HashSet<String> {
    crate::parser::tokenize(&ast.source)
        .map(|toks| {
            toks.iter()
                .filter(|t| t.kind == crate::parser::TokenKind::Ident)
                .map(|t| ast.source[t.span.start..t.span.end].to_string())
                .collect()
        })
        .unwrap_or_default()
}

/// Smallest `tmp_<k>` not used as an identifier anywhere in the unit.
pub fn fresh_temp_name(ast: &Ast) -> String {
    let used = identifier_names(ast);
    (0..).map(|k| format!("tmp_{k}")).find(|n| !used.contains(n)).expect("unbounded range")
}

// ---- predicate catalog ------------------------------------------------------

fn assign_parts(ast: &Ast, stmt: NodeId) -> (NodeId, NodeId) {
    let assign = ast.children(stmt)[0];
    let c = ast.children(assign);
    (c[0], c[1])
}

fn binary_ops_in(ast: &Ast, id: NodeId) -> usize {
    ast.descendants(id)
        .filter(|&n| ast.kind(n) == NodeKind::BinaryExpr)
        .count()
}

/// The subexpression assignment splitting extracts: the deepest binary node,
/// leftmost among equals.
pub fn deepest_binary(ast: &Ast, expr: NodeId) -> Option<NodeId> {
    let mut best: Option<(usize, usize, NodeId)> = None;
    let mut stack = vec![(expr, 0usize)];
    while let Some((id, depth)) = stack.pop() {
        let is_bin = ast.kind(id) == NodeKind::BinaryExpr;
        let d = depth + usize::from(is_bin);
        if is_bin {
            let start = ast.node(id).span.start;
            let better = match best {
                None => true,
                Some((bd, bs, _)) => d > bd || (d == bd && start < bs),
            };
            if better {
                best = Some((d, start, id));
            }
        }
        for &c in ast.children(id) {
            stack.push((c, d));
        }
    }
    best.map(|b| b.2)
}

fn p_assign_in_block(ast: &Ast, stmt: NodeId) -> bool {
    ast.parent(stmt).is_some_and(|p| ast.kind(p) == NodeKind::CompoundStmt)
}

fn p_assign_complex(ast: &Ast, stmt: NodeId) -> bool {
    binary_ops_in(ast, assign_parts(ast, stmt).1) >= 2
}

fn p_assign_leaf_operands(ast: &Ast, stmt: NodeId) -> bool {
    let rhs = assign_parts(ast, stmt).1;
    ast.descendants(rhs).all(|n| match ast.kind(n) {
        NodeKind::BinaryExpr => SPLITTABLE_OPS.contains(&ast.node(n).op()),
        NodeKind::ParenExpr | NodeKind::Identifier => true,
        NodeKind::Literal => is_integer_literal(ast, n),
        _ => false,
    })
}

fn p_assign_pure(ast: &Ast, stmt: NodeId) -> bool {
    !has_side_effects(ast, assign_parts(ast, stmt).1)
}

fn p_assign_lhs_typed(ast: &Ast, stmt: NodeId) -> bool {
    let lhs = assign_parts(ast, stmt).0;
    ast.kind(lhs) == NodeKind::Identifier && matches!(declared_int(ast, ast.text(lhs)), Some((_, false)))
}

fn p_assign_types_match(ast: &Ast, stmt: NodeId) -> bool {
    let (lhs, rhs) = assign_parts(ast, stmt);
    let Some((target, _)) = declared_int(ast, ast.text(lhs)) else { return false };
    if int_expr_type(ast, rhs).is_none() {
        return false;
    }
    deepest_binary(ast, rhs).and_then(|sub| int_expr_type(ast, sub)) == Some(target)
}

fn p_fresh_temp(ast: &Ast, _stmt: NodeId) -> bool {
    !fresh_temp_name(ast).is_empty()
}

const COMPOUND_OPS: &[&str] = &["+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

fn p_compound_op(ast: &Ast, id: NodeId) -> bool {
    COMPOUND_OPS.contains(&ast.node(id).op())
}

fn p_single_eval_lvalue(ast: &Ast, id: NodeId) -> bool {
    let lv = strip_parens(ast, ast.children(id)[0]);
    match ast.kind(lv) {
        NodeKind::Identifier => true,
        NodeKind::MemberExpr | NodeKind::IndexExpr => !has_side_effects(ast, lv),
        _ => false,
    }
}

fn p_always(_: &Ast, _: NodeId) -> bool {
    true
}

fn for_body(ast: &Ast, id: NodeId) -> NodeId {
    *ast.children(id).last().expect("loop body")
}

fn p_no_own_continue(ast: &Ast, id: NodeId) -> bool {
    own_continues(ast, id).is_empty()
}

/// Names read by the update clause must not be redeclared at the top level of
/// the body, where the relocated update would see the inner declaration.
fn p_update_not_shadowed(ast: &Ast, id: NodeId) -> bool {
    let Some(update) = ast.for_clauses(id).update else { return true };
    let body = for_body(ast, id);
    if ast.kind(body) != NodeKind::CompoundStmt {
        return true;
    }
    let used: HashSet<&str> = ast
        .descendants(update)
        .filter(|&n| ast.kind(n) == NodeKind::Identifier)
        .map(|n| ast.text(n))
        .collect();
    ast.children(body).iter().filter(|&&s| ast.kind(s) == NodeKind::DeclStmt).all(|&s| {
        ast.children(s)
            .iter()
            .filter(|&&c| ast.kind(c) == NodeKind::Identifier && ast.node(c).type_text.is_some())
            .all(|&c| !used.contains(ast.text(c)))
    })
}

fn p_has_else(ast: &Ast, id: NodeId) -> bool {
    ast.children(id).len() == 3
}

fn p_branches_no_jump_targets(ast: &Ast, id: NodeId) -> bool {
    ast.children(id)[1..].iter().all(|&b| !jump_targets_inside(ast, b))
}

fn top_cond_op(ast: &Ast, id: NodeId) -> &str {
    let cond = ast.children(id)[0];
    if ast.kind(cond) == NodeKind::BinaryExpr {
        ast.node(cond).op()
    } else {
        ""
    }
}

fn p_and_condition(ast: &Ast, id: NodeId) -> bool {
    top_cond_op(ast, id) == "&&"
}

fn p_or_condition(ast: &Ast, id: NodeId) -> bool {
    top_cond_op(ast, id) == "||"
}

fn p_then_no_jump_targets(ast: &Ast, id: NodeId) -> bool {
    !jump_targets_inside(ast, ast.children(id)[1])
}

/// The else branch is duplicated by and-splitting; static locals in it would
/// become two objects.
fn p_and_duplicate_no_static(ast: &Ast, id: NodeId) -> bool {
    ast.children(id).get(2).is_none_or(|&e| !contains_static_decl(ast, e))
}

fn p_or_duplicate_no_static(ast: &Ast, id: NodeId) -> bool {
    !contains_static_decl(ast, ast.children(id)[1])
}

fn p_pure_operands(ast: &Ast, id: NodeId) -> bool {
    ast.children(id).iter().all(|&c| !has_side_effects(ast, c))
}

static ASSIGN_SPLIT: &[Predicate] = &[
    Predicate { name: "statement-in-block", check: p_assign_in_block },
    Predicate { name: "two-or-more-operators", check: p_assign_complex },
    Predicate { name: "identifier-or-integer-operands", check: p_assign_leaf_operands },
    Predicate { name: "side-effect-free-rhs", check: p_assign_pure },
    Predicate { name: "lhs-integer-typed", check: p_assign_lhs_typed },
    Predicate { name: "temporary-type-exact", check: p_assign_types_match },
    Predicate { name: "fresh-temporary", check: p_fresh_temp },
];
static COMPOUND_SPLIT: &[Predicate] = &[
    Predicate { name: "compound-operator", check: p_compound_op },
    Predicate { name: "single-evaluation-lvalue", check: p_single_eval_lvalue },
];
static WHILE_TO_FOR: &[Predicate] = &[Predicate { name: "while-statement", check: p_always }];
static FOR_TO_WHILE: &[Predicate] = &[
    Predicate { name: "no-continue", check: p_no_own_continue },
    Predicate { name: "update-not-shadowed", check: p_update_not_shadowed },
];
static COND_NEGATE: &[Predicate] = &[
    Predicate { name: "has-else", check: p_has_else },
    Predicate { name: "no-labels-in-branches", check: p_branches_no_jump_targets },
];
static COND_SPLIT_AND: &[Predicate] = &[
    Predicate { name: "and-condition", check: p_and_condition },
    Predicate { name: "no-labels-in-branches", check: p_branches_no_jump_targets },
    Predicate { name: "no-static-in-duplicate", check: p_and_duplicate_no_static },
];
static COND_SPLIT_OR: &[Predicate] = &[
    Predicate { name: "or-condition", check: p_or_condition },
    Predicate { name: "no-labels-in-then", check: p_then_no_jump_targets },
    Predicate { name: "no-static-in-duplicate", check: p_or_duplicate_no_static },
];
static COND_REORDER: &[Predicate] = &[Predicate { name: "side-effect-free-operands", check: p_pure_operands }];

pub fn constraint_set(rule: TransformRule) -> ConstraintSet {
    let predicates = match rule {
        TransformRule::AssignSplit => ASSIGN_SPLIT,
        TransformRule::CompoundAssignSplit => COMPOUND_SPLIT,
        TransformRule::WhileToFor => WHILE_TO_FOR,
        TransformRule::ForToWhile => FOR_TO_WHILE,
        TransformRule::CondNegate => COND_NEGATE,
        TransformRule::CondSplitAnd => COND_SPLIT_AND,
        TransformRule::CondSplitOr => COND_SPLIT_OR,
        TransformRule::CondReorder => COND_REORDER,
    };
    ConstraintSet { rule, predicates }
}
