//! Parsing of one C function definition into a span-anchored AST, plus
//! edit-list rewriting over the original bytes.
//!
//! The accepted language is a pragmatic subset: declarations, the usual
//! statement forms and the full C operator set. Statements the subset does
//! not cover (GNU statement expressions, inline asm, macro-shaped loops, ...)
//! become `OpaqueStmt` nodes as long as their delimiters balance. Text before
//! the function (directives, typedefs, prototypes) is kept as an opaque
//! preamble.

mod ast;
mod lexer;
mod rewrite;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{Ast, AstNode, Descendants, ForClauses, NodeId, NodeKind, Shape, Span};
pub use lexer::{skip_trivia, tokenize, Token, TokenKind};
pub use rewrite::{map_position, rewrite, Edit, RewriteError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Vulnerable,
    NonVulnerable,
    Unknown,
}

impl Label {
    pub fn from_target(target: i64) -> Self {
        match target {
            1 => Label::Vulnerable,
            0 => Label::NonVulnerable,
            _ => Label::Unknown,
        }
    }

    pub fn target(self) -> Option<i64> {
        match self {
            Label::Vulnerable => Some(1),
            Label::NonVulnerable => Some(0),
            Label::Unknown => None,
        }
    }
}

/// One C function (plus optional preamble) and its ground-truth tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub id: i64,
    pub text: String,
    pub label: Label,
}

impl SourceUnit {
    pub fn new(id: i64, text: impl Into<String>, label: Label) -> Self {
        SourceUnit { id, text: text.into(), label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced delimiter at byte {offset}")]
    UnbalancedDelimiters { offset: usize },
    #[error("more than one function definition")]
    MultipleFunctions,
    #[error("preprocessor directive inside the function at byte {offset}")]
    DirectiveInBody { offset: usize },
    #[error("no function definition found")]
    NotAFunction,
    #[error("text is not a single expression or statement")]
    InvalidFragment,
}

pub fn parse(unit: &SourceUnit) -> Result<Ast, ParseError> {
    parse_text(&unit.text)
}

const BASE_TYPES: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool",
    "_Complex", "__int128", "__signed__", "__signed",
];

const SPECIFIER_WORDS: &[&str] = &[
    "const", "volatile", "restrict", "static", "extern", "register", "auto", "inline", "typedef",
    "_Atomic", "__restrict", "__restrict__", "__inline", "__inline__", "__const", "__volatile__",
    "__extension__", "_Thread_local", "__thread", "_Noreturn",
];

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Atomic",
    "_Alignof", "_Alignas", "_Static_assert", "_Thread_local", "_Noreturn", "__attribute__",
    "__attribute", "__extension__", "asm", "__asm__", "__asm",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// True for C keywords (including the GNU spellings the parser accepts).
pub fn is_c_keyword(s: &str) -> bool {
    is_keyword(s)
}

fn binary_prec(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 4,
        "&&" => 5,
        "|" => 6,
        "^" => 7,
        "&" => 8,
        "==" | "!=" => 9,
        "<" | ">" | "<=" | ">=" => 10,
        "<<" | ">>" => 11,
        "+" | "-" => 12,
        "*" | "/" | "%" => 13,
        _ => return None,
    })
}

/// Precedence level of an expression node as it would bind in source, higher
/// binds tighter. Used when moving operands between positions.
pub fn expr_precedence(ast: &Ast, id: NodeId) -> u8 {
    let n = ast.node(id);
    match n.kind {
        NodeKind::BinaryExpr if n.op() == "," => 1,
        NodeKind::BinaryExpr => binary_prec(n.op()).unwrap_or(0),
        NodeKind::AssignExpr | NodeKind::CompoundAssignExpr => 2,
        NodeKind::TernaryExpr => 3,
        NodeKind::UnaryExpr | NodeKind::CastExpr => 14,
        _ => 15,
    }
}

fn looks_like_typedef_name(name: &str, typedefs: &HashSet<String>) -> bool {
    typedefs.contains(name) || (name.ends_with("_t") && name.len() > 2) || name == "FILE"
}

#[derive(Debug)]
struct Fail;

type PResult<T> = Result<T, Fail>;

struct RawNode {
    kind: NodeKind,
    span: Span,
    children: Vec<usize>,
    op: Option<String>,
    type_text: Option<String>,
    for_clauses: Option<ForClauses>,
}

struct Builder<'a> {
    text: &'a str,
    toks: Vec<Token>,
    pos: usize,
    limit: usize,
    nodes: Vec<RawNode>,
    typedefs: HashSet<String>,
}

impl<'a> Builder<'a> {
    fn new(text: &'a str, toks: Vec<Token>, typedefs: HashSet<String>) -> Self {
        let limit = toks.len();
        Builder { text, toks, pos: 0, limit, nodes: Vec::new(), typedefs }
    }

    fn tok_text(&self, i: usize) -> &'a str {
        match self.toks.get(i) {
            Some(t) if i < self.limit => &self.text[t.span.start..t.span.end],
            _ => "",
        }
    }

    fn cur(&self) -> &'a str {
        self.tok_text(self.pos)
    }

    fn peek(&self, k: usize) -> &'a str {
        self.tok_text(self.pos + k)
    }

    fn kind_at(&self, i: usize) -> Option<TokenKind> {
        if i < self.limit {
            self.toks.get(i).map(|t| t.kind)
        } else {
            None
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.limit
    }

    fn is_ident_at(&self, i: usize) -> bool {
        self.kind_at(i) == Some(TokenKind::Ident) && !is_keyword(self.tok_text(i))
    }

    fn start_of(&self, i: usize) -> usize {
        self.toks[i].span.start
    }

    fn end_of(&self, i: usize) -> usize {
        self.toks[i].span.end
    }

    fn expect(&mut self, s: &str) -> PResult<usize> {
        if !self.at_end() && self.cur() == s && self.kind_at(self.pos) != Some(TokenKind::Str) {
            self.pos += 1;
            Ok(self.pos - 1)
        } else {
            Err(Fail)
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.expect(s).is_ok()
    }

    fn add(&mut self, kind: NodeKind, span: Span, children: Vec<usize>) -> usize {
        self.nodes.push(RawNode { kind, span, children, op: None, type_text: None, for_clauses: None });
        self.nodes.len() - 1
    }

    fn add_op(&mut self, kind: NodeKind, span: Span, children: Vec<usize>, op: &str) -> usize {
        let id = self.add(kind, span, children);
        self.nodes[id].op = Some(op.to_string());
        id
    }

    fn span_from(&self, first_tok: usize) -> Span {
        Span::new(self.start_of(first_tok), self.end_of(self.pos - 1))
    }

    /// Index just past the delimiter matching the opener at `i`.
    fn matching(&self, i: usize) -> PResult<usize> {
        let mut depth = 0usize;
        let mut j = i;
        while j < self.limit {
            match self.tok_text(j) {
                "(" | "[" | "{" if self.toks[j].kind == TokenKind::Punct => depth += 1,
                ")" | "]" | "}" if self.toks[j].kind == TokenKind::Punct => {
                    depth = depth.checked_sub(1).ok_or(Fail)?;
                    if depth == 0 {
                        return Ok(j + 1);
                    }
                }
                _ => {}
            }
            j += 1;
        }
        Err(Fail)
    }

    // ---- statements -------------------------------------------------------

    fn parse_compound(&mut self) -> PResult<usize> {
        let first = self.expect("{")?;
        let mut children = Vec::new();
        while !self.at_end() && self.cur() != "}" {
            children.push(self.parse_statement());
        }
        self.expect("}")?;
        Ok(self.add(NodeKind::CompoundStmt, self.span_from(first), children))
    }

    fn parse_statement(&mut self) -> usize {
        let (pos, len) = (self.pos, self.nodes.len());
        match self.try_statement() {
            Ok(id) => id,
            Err(Fail) => {
                self.pos = pos;
                self.nodes.truncate(len);
                self.skip_statement();
                if self.pos == pos {
                    self.pos += 1;
                }
                self.add(NodeKind::OpaqueStmt, self.span_from(pos), Vec::new())
            }
        }
    }

    fn skip_group(&mut self) {
        match self.matching(self.pos) {
            Ok(end) => self.pos = end,
            Err(Fail) => self.pos = self.limit,
        }
    }

    /// Advances over one statement without building nodes.
    fn skip_statement(&mut self) {
        if self.at_end() {
            return;
        }
        match self.cur() {
            "{" => self.skip_group(),
            "if" | "while" | "for" | "switch" => {
                let kw = self.cur();
                self.pos += 1;
                if self.cur() == "(" {
                    self.skip_group();
                }
                self.skip_statement();
                if kw == "if" && self.cur() == "else" {
                    self.pos += 1;
                    self.skip_statement();
                }
            }
            "do" => {
                self.pos += 1;
                self.skip_statement();
                if self.cur() == "while" {
                    self.pos += 1;
                    if self.cur() == "(" {
                        self.skip_group();
                    }
                }
                self.eat(";");
            }
            _ => {
                while !self.at_end() {
                    match self.cur() {
                        ";" => {
                            self.pos += 1;
                            return;
                        }
                        "}" => return,
                        "{" => {
                            self.skip_group();
                            self.eat(";");
                            return;
                        }
                        "(" | "[" => self.skip_group(),
                        _ => self.pos += 1,
                    }
                }
            }
        }
    }

    fn try_statement(&mut self) -> PResult<usize> {
        let first = self.pos;
        match self.cur() {
            "{" => self.parse_compound(),
            "if" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                let then = self.parse_statement();
                let mut children = vec![cond, then];
                if self.eat("else") {
                    children.push(self.parse_statement());
                }
                Ok(self.add(NodeKind::IfStmt, self.span_from(first), children))
            }
            "while" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                let body = self.parse_statement();
                Ok(self.add(NodeKind::WhileStmt, self.span_from(first), vec![cond, body]))
            }
            "do" => {
                self.pos += 1;
                let body = self.parse_statement();
                self.expect("while")?;
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                self.expect(";")?;
                Ok(self.add(NodeKind::DoWhileStmt, self.span_from(first), vec![body, cond]))
            }
            "for" => {
                self.pos += 1;
                self.expect("(")?;
                let init = if self.eat(";") {
                    None
                } else if self.is_decl_start(self.pos) {
                    Some(self.parse_decl()?)
                } else {
                    let e = self.parse_expr()?;
                    self.expect(";")?;
                    Some(e)
                };
                let cond = if self.cur() == ";" { None } else { Some(self.parse_expr()?) };
                self.expect(";")?;
                let update = if self.cur() == ")" { None } else { Some(self.parse_expr()?) };
                self.expect(")")?;
                let body = self.parse_statement();
                let children: Vec<usize> = [init, cond, update, Some(body)].into_iter().flatten().collect();
                let id = self.add(NodeKind::ForStmt, self.span_from(first), children);
                self.nodes[id].for_clauses = Some(ForClauses { init, cond, update });
                Ok(id)
            }
            "switch" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                let body = self.parse_statement();
                Ok(self.add(NodeKind::SwitchStmt, self.span_from(first), vec![cond, body]))
            }
            "case" => {
                self.pos += 1;
                let value = self.parse_conditional()?;
                self.expect(":")?;
                let mut children = vec![value];
                if !self.at_end() && self.cur() != "}" {
                    children.push(self.parse_statement());
                }
                Ok(self.add_op(NodeKind::CaseLabel, self.span_from(first), children, "case"))
            }
            "default" => {
                self.pos += 1;
                self.expect(":")?;
                let mut children = Vec::new();
                if !self.at_end() && self.cur() != "}" {
                    children.push(self.parse_statement());
                }
                Ok(self.add_op(NodeKind::CaseLabel, self.span_from(first), children, "default"))
            }
            "return" => {
                self.pos += 1;
                let mut children = Vec::new();
                if self.cur() != ";" {
                    children.push(self.parse_expr()?);
                }
                self.expect(";")?;
                Ok(self.add(NodeKind::ReturnStmt, self.span_from(first), children))
            }
            "break" | "continue" => {
                let kind = if self.cur() == "break" { NodeKind::BreakStmt } else { NodeKind::ContinueStmt };
                self.pos += 1;
                self.expect(";")?;
                Ok(self.add(kind, self.span_from(first), Vec::new()))
            }
            "goto" => {
                self.pos += 1;
                if !self.is_ident_at(self.pos) {
                    return Err(Fail);
                }
                let label = self.cur();
                self.pos += 1;
                self.expect(";")?;
                Ok(self.add_op(NodeKind::GotoStmt, self.span_from(first), Vec::new(), label))
            }
            ";" => {
                self.pos += 1;
                Ok(self.add(NodeKind::ExprStmt, self.span_from(first), Vec::new()))
            }
            "else" | "}" | ")" | "]" => Err(Fail),
            _ if self.is_ident_at(self.pos) && self.peek(1) == ":" => {
                let label = self.cur();
                self.pos += 2;
                let mut children = Vec::new();
                if !self.at_end() && self.cur() != "}" {
                    children.push(self.parse_statement());
                }
                Ok(self.add_op(NodeKind::LabelStmt, self.span_from(first), children, label))
            }
            _ if self.is_decl_start(self.pos) => self.parse_decl(),
            _ => {
                let e = self.parse_expr()?;
                self.expect(";")?;
                Ok(self.add(NodeKind::ExprStmt, self.span_from(first), vec![e]))
            }
        }
    }

    fn is_specifier_word(s: &str) -> bool {
        BASE_TYPES.contains(&s)
            || SPECIFIER_WORDS.contains(&s)
            || matches!(s, "struct" | "union" | "enum" | "__attribute__" | "__attribute")
    }

    fn is_decl_start(&self, i: usize) -> bool {
        let t = self.tok_text(i);
        if self.kind_at(i) != Some(TokenKind::Ident) {
            return false;
        }
        if Self::is_specifier_word(t) {
            return true;
        }
        if is_keyword(t) {
            return false;
        }
        let next = self.tok_text(i + 1);
        if self.is_ident_at(i + 1) {
            return true;
        }
        if looks_like_typedef_name(t, &self.typedefs) && matches!(next, "*") {
            return true;
        }
        if next == "*" {
            let mut j = i + 1;
            while self.tok_text(j) == "*" {
                j += 1;
            }
            return self.is_ident_at(j) && matches!(self.tok_text(j + 1), ";" | "=" | "," | "[" | ")");
        }
        false
    }

    /// Consumes declaration specifiers; returns the byte span they cover.
    fn parse_specifiers(&mut self) -> PResult<(Span, bool)> {
        let first = self.pos;
        let mut saw_type = false;
        let mut is_typedef = false;
        while !self.at_end() {
            let t = self.cur();
            if self.kind_at(self.pos) != Some(TokenKind::Ident) {
                break;
            }
            if BASE_TYPES.contains(&t) {
                saw_type = true;
                self.pos += 1;
            } else if SPECIFIER_WORDS.contains(&t) {
                is_typedef |= t == "typedef";
                self.pos += 1;
            } else if matches!(t, "struct" | "union" | "enum") {
                saw_type = true;
                self.pos += 1;
                if self.is_ident_at(self.pos) {
                    self.pos += 1;
                }
                if self.cur() == "{" {
                    self.pos = self.matching(self.pos)?;
                }
            } else if matches!(t, "__attribute__" | "__attribute") {
                self.pos += 1;
                if self.cur() == "(" {
                    self.pos = self.matching(self.pos)?;
                }
            } else if !saw_type && !is_keyword(t) {
                saw_type = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        if !saw_type || self.pos == first {
            return Err(Fail);
        }
        Ok((self.span_from(first), is_typedef))
    }

    fn parse_decl(&mut self) -> PResult<usize> {
        let first = self.pos;
        let (spec, is_typedef) = self.parse_specifiers()?;
        let base = self.text[spec.start..spec.end].trim().to_string();
        let mut children = Vec::new();
        if self.eat(";") {
            let id = self.add(NodeKind::DeclStmt, self.span_from(first), children);
            self.nodes[id].type_text = Some(base);
            return Ok(id);
        }
        loop {
            let decl_first = self.pos;
            while self.cur() == "*" || matches!(self.cur(), "const" | "volatile" | "restrict" | "__restrict") {
                self.pos += 1;
            }
            let name_tok;
            let mut complex = false;
            if self.is_ident_at(self.pos) {
                name_tok = self.pos;
                self.pos += 1;
            } else if self.cur() == "(" {
                let end = self.matching(self.pos)?;
                let inner = (self.pos + 1..end - 1).find(|&j| self.is_ident_at(j)).ok_or(Fail)?;
                name_tok = inner;
                self.pos = end;
                complex = true;
            } else {
                return Err(Fail);
            }
            let after_name = self.pos;
            while matches!(self.cur(), "[" | "(") {
                complex |= self.cur() == "(";
                self.pos = self.matching(self.pos)?;
            }
            let suffix_end = if self.pos > after_name { self.end_of(self.pos - 1) } else { self.end_of(name_tok) };
            if matches!(self.cur(), "__attribute__" | "__attribute") {
                self.pos += 1;
                if self.cur() == "(" {
                    self.pos = self.matching(self.pos)?;
                }
            }
            let name_span = Span::new(self.start_of(name_tok), self.end_of(name_tok));
            let type_text = if complex || decl_first != name_tok || suffix_end != name_span.end {
                let prefix = self.text[self.start_of(decl_first)..name_span.start].trim();
                let suffix = self.text[name_span.end..suffix_end].trim();
                format!("{base} {prefix}{suffix}").trim().to_string()
            } else {
                base.clone()
            };
            if is_typedef {
                self.typedefs.insert(self.text[name_span.start..name_span.end].to_string());
            }
            let ident = self.add(NodeKind::Identifier, name_span, Vec::new());
            self.nodes[ident].type_text = Some(type_text);
            children.push(ident);
            if self.eat("=") {
                if self.cur() == "{" {
                    let open = self.pos;
                    self.pos = self.matching(self.pos)?;
                    children.push(self.add(NodeKind::OpaqueStmt, self.span_from(open), Vec::new()));
                } else {
                    children.push(self.parse_assignment()?);
                }
            }
            if self.eat(",") {
                continue;
            }
            self.expect(";")?;
            break;
        }
        let id = self.add(NodeKind::DeclStmt, self.span_from(first), children);
        self.nodes[id].type_text = Some(base);
        Ok(id)
    }

    // ---- expressions ------------------------------------------------------

    fn parse_expr(&mut self) -> PResult<usize> {
        let first = self.pos;
        let mut lhs = self.parse_assignment()?;
        while self.eat(",") {
            let rhs = self.parse_assignment()?;
            lhs = self.add_op(NodeKind::BinaryExpr, self.span_from(first), vec![lhs, rhs], ",");
        }
        Ok(lhs)
    }

    fn parse_assignment(&mut self) -> PResult<usize> {
        let first = self.pos;
        let lhs = self.parse_conditional()?;
        let op = self.cur();
        if ASSIGN_OPS.contains(&op) && self.kind_at(self.pos) == Some(TokenKind::Punct) {
            self.pos += 1;
            let rhs = self.parse_assignment()?;
            let kind = if op == "=" { NodeKind::AssignExpr } else { NodeKind::CompoundAssignExpr };
            return Ok(self.add_op(kind, self.span_from(first), vec![lhs, rhs], op));
        }
        Ok(lhs)
    }

    fn parse_conditional(&mut self) -> PResult<usize> {
        let first = self.pos;
        let cond = self.parse_binary(4)?;
        if self.eat("?") {
            let a = self.parse_expr()?;
            self.expect(":")?;
            let b = self.parse_conditional()?;
            return Ok(self.add_op(NodeKind::TernaryExpr, self.span_from(first), vec![cond, a, b], "?:"));
        }
        Ok(cond)
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<usize> {
        let first = self.pos;
        let mut lhs = self.parse_unary()?;
        loop {
            let op = self.cur();
            let Some(prec) = binary_prec(op) else { break };
            if prec < min_prec || self.kind_at(self.pos) != Some(TokenKind::Punct) {
                break;
            }
            self.pos += 1;
            let rhs = self.parse_binary(prec + 1)?;
            lhs = self.add_op(NodeKind::BinaryExpr, self.span_from(first), vec![lhs, rhs], op);
        }
        Ok(lhs)
    }

    fn is_type_name_start(&self, i: usize) -> bool {
        let t = self.tok_text(i);
        if self.kind_at(i) != Some(TokenKind::Ident) {
            return false;
        }
        BASE_TYPES.contains(&t)
            || matches!(t, "struct" | "union" | "enum" | "const" | "volatile" | "_Atomic")
            || (!is_keyword(t) && looks_like_typedef_name(t, &self.typedefs))
    }

    /// Whether the parenthesis at `i` opens a cast (or a sizeof type operand).
    fn is_type_paren(&self, i: usize, for_cast: bool) -> bool {
        if self.tok_text(i) != "(" {
            return false;
        }
        let Ok(end) = self.matching(i) else { return false };
        if self.is_type_name_start(i + 1) {
            return true;
        }
        if !self.is_ident_at(i + 1) {
            return false;
        }
        let stars = (i + 2..end - 1).all(|j| self.tok_text(j) == "*");
        if stars && end - 1 > i + 2 {
            return true;
        }
        for_cast
            && end == i + 3
            && matches!(self.kind_at(end), Some(TokenKind::Ident | TokenKind::Number | TokenKind::Char | TokenKind::Str))
            && !is_keyword(self.tok_text(end))
    }

    fn parse_unary(&mut self) -> PResult<usize> {
        let first = self.pos;
        let t = self.cur();
        if self.kind_at(self.pos) == Some(TokenKind::Punct) {
            match t {
                "++" | "--" => {
                    self.pos += 1;
                    let e = self.parse_unary()?;
                    return Ok(self.add_op(NodeKind::UnaryExpr, self.span_from(first), vec![e], t));
                }
                "+" | "-" | "!" | "~" | "*" | "&" => {
                    self.pos += 1;
                    let e = self.parse_unary()?;
                    return Ok(self.add_op(NodeKind::UnaryExpr, self.span_from(first), vec![e], t));
                }
                "(" if self.is_type_paren(self.pos, true) => {
                    let end = self.matching(self.pos)?;
                    let ty = self.text[self.end_of(self.pos)..self.start_of(end - 1)].trim().to_string();
                    self.pos = end;
                    if self.cur() == "{" {
                        return Err(Fail);
                    }
                    let e = self.parse_unary()?;
                    let id = self.add(NodeKind::CastExpr, self.span_from(first), vec![e]);
                    self.nodes[id].type_text = Some(ty);
                    return Ok(id);
                }
                _ => {}
            }
        }
        if matches!(t, "sizeof" | "_Alignof" | "__alignof__" | "alignof") {
            self.pos += 1;
            if self.is_type_paren(self.pos, false) {
                let end = self.matching(self.pos)?;
                let ty = self.text[self.end_of(self.pos)..self.start_of(end - 1)].trim().to_string();
                self.pos = end;
                let id = self.add_op(NodeKind::UnaryExpr, self.span_from(first), Vec::new(), t);
                self.nodes[id].type_text = Some(ty);
                return Ok(id);
            }
            let e = self.parse_unary()?;
            return Ok(self.add_op(NodeKind::UnaryExpr, self.span_from(first), vec![e], t));
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> PResult<usize> {
        let first = self.pos;
        let mut e = self.parse_primary()?;
        loop {
            if self.kind_at(self.pos) != Some(TokenKind::Punct) {
                break;
            }
            match self.cur() {
                "[" => {
                    self.pos += 1;
                    let idx = self.parse_expr()?;
                    self.expect("]")?;
                    e = self.add(NodeKind::IndexExpr, self.span_from(first), vec![e, idx]);
                }
                "(" => {
                    self.pos += 1;
                    let mut children = vec![e];
                    if !self.eat(")") {
                        loop {
                            children.push(self.parse_assignment()?);
                            if self.eat(")") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    e = self.add(NodeKind::CallExpr, self.span_from(first), children);
                }
                op @ ("." | "->") => {
                    self.pos += 1;
                    if !self.is_ident_at(self.pos) {
                        return Err(Fail);
                    }
                    let field = self.add(NodeKind::Identifier, Span::new(self.start_of(self.pos), self.end_of(self.pos)), Vec::new());
                    self.pos += 1;
                    e = self.add_op(NodeKind::MemberExpr, self.span_from(first), vec![e, field], op);
                }
                op @ ("++" | "--") => {
                    self.pos += 1;
                    e = self.add_op(NodeKind::UnaryExpr, self.span_from(first), vec![e], op);
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn parse_primary(&mut self) -> PResult<usize> {
        let first = self.pos;
        match self.kind_at(self.pos) {
            Some(TokenKind::Ident) if !is_keyword(self.cur()) => {
                self.pos += 1;
                Ok(self.add(NodeKind::Identifier, self.span_from(first), Vec::new()))
            }
            Some(TokenKind::Number | TokenKind::Char) => {
                self.pos += 1;
                Ok(self.add(NodeKind::Literal, self.span_from(first), Vec::new()))
            }
            Some(TokenKind::Str) => {
                while self.kind_at(self.pos) == Some(TokenKind::Str) {
                    self.pos += 1;
                }
                Ok(self.add(NodeKind::Literal, self.span_from(first), Vec::new()))
            }
            Some(TokenKind::Punct) if self.cur() == "(" => {
                if self.peek(1) == "{" {
                    return Err(Fail);
                }
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(")")?;
                Ok(self.add(NodeKind::ParenExpr, self.span_from(first), vec![inner]))
            }
            _ => Err(Fail),
        }
    }

    /// Converts the raw arena into a preorder-numbered `Ast`.
    fn finish(self, raw_root: usize, source: &str) -> Ast {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![raw_root];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(self.nodes[id].children.iter().rev());
        }
        let mut remap: HashMap<usize, NodeId> = HashMap::with_capacity(order.len());
        for (new, &old) in order.iter().enumerate() {
            remap.insert(old, new);
        }
        let mut raw: Vec<Option<RawNode>> = self.nodes.into_iter().map(Some).collect();
        let mut nodes: Vec<AstNode> = Vec::with_capacity(order.len());
        for (new, &old) in order.iter().enumerate() {
            let r = raw[old].take().expect("node visited once");
            nodes.push(AstNode {
                id: new,
                kind: r.kind,
                span: r.span,
                children: r.children.iter().map(|c| remap[c]).collect(),
                parent: None,
                op: r.op,
                type_text: r.type_text,
                for_clauses: r.for_clauses.map(|f| ForClauses {
                    init: f.init.map(|c| remap[&c]),
                    cond: f.cond.map(|c| remap[&c]),
                    update: f.update.map(|c| remap[&c]),
                }),
            });
        }
        for id in 0..nodes.len() {
            for c in nodes[id].children.clone() {
                nodes[c].parent = Some(id);
            }
        }
        Ast { nodes, root: 0, source: source.to_string() }
    }
}

fn check_balance(toks: &[Token], text: &str) -> Result<(), ParseError> {
    let mut stack: Vec<(u8, usize)> = Vec::new();
    for t in toks.iter().filter(|t| t.kind == TokenKind::Punct) {
        let s = &text[t.span.start..t.span.end];
        match s {
            "(" | "[" | "{" => stack.push((s.as_bytes()[0], t.span.start)),
            ")" | "]" | "}" => {
                let want = match s {
                    ")" => b'(',
                    "]" => b'[',
                    _ => b'{',
                };
                match stack.pop() {
                    Some((open, _)) if open == want => {}
                    _ => return Err(ParseError::UnbalancedDelimiters { offset: t.span.start }),
                }
            }
            _ => {}
        }
    }
    match stack.pop() {
        Some((_, offset)) => Err(ParseError::UnbalancedDelimiters { offset }),
        None => Ok(()),
    }
}

/// Typedef names introduced by top-level `typedef` declarations.
fn collect_typedefs(text: &str, toks: &[Token]) -> HashSet<String> {
    let mut names = HashSet::new();
    let mut i = 0;
    while i < toks.len() {
        let t = &text[toks[i].span.start..toks[i].span.end];
        if toks[i].kind == TokenKind::Ident && t == "typedef" {
            let mut depth = 0i32;
            let mut last_ident = None;
            let mut paren_ident = None;
            let mut j = i + 1;
            while j < toks.len() {
                let s = &text[toks[j].span.start..toks[j].span.end];
                match s {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    ";" if depth == 0 => break,
                    _ => {
                        if toks[j].kind == TokenKind::Ident && !is_keyword(s) {
                            if depth == 0 {
                                last_ident = Some(s);
                            } else if depth == 1 && paren_ident.is_none() && j > 0 && text[toks[j - 1].span.start..toks[j - 1].span.end] == *"*" {
                                paren_ident = Some(s);
                            }
                        }
                    }
                }
                j += 1;
            }
            if let Some(n) = last_ident.or(paren_ident) {
                names.insert(n.to_string());
            }
            i = j;
        }
        i += 1;
    }
    names
}

struct FunctionItem {
    first: usize,
    body_open: usize,
    body_close: usize,
}

pub fn parse_text(text: &str) -> Result<Ast, ParseError> {
    let all = tokenize(text)?;
    check_balance(&all, text)?;

    let t = |i: usize| &text[all[i].span.start..all[i].span.end];
    let mut function: Option<FunctionItem> = None;
    let mut directives_in_item: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < all.len() {
        if all[i].kind == TokenKind::Directive {
            i += 1;
            continue;
        }
        let first = i;
        let mut depth = 0usize;
        let mut prev: Option<usize> = None;
        let mut item_function = None;
        directives_in_item.clear();
        while i < all.len() {
            if all[i].kind == TokenKind::Directive {
                directives_in_item.push(all[i].span.start);
                i += 1;
                continue;
            }
            let s = t(i);
            let punct = all[i].kind == TokenKind::Punct;
            if punct && s == "{" && depth == 0 && prev.is_some_and(|p| t(p) == ")") {
                let mut d = 0usize;
                let mut j = i;
                loop {
                    if all[j].kind == TokenKind::Punct {
                        match t(j) {
                            "(" | "[" | "{" => d += 1,
                            ")" | "]" | "}" => d -= 1,
                            _ => {}
                        }
                    } else if all[j].kind == TokenKind::Directive {
                        return Err(ParseError::DirectiveInBody { offset: all[j].span.start });
                    }
                    if d == 0 {
                        break;
                    }
                    j += 1;
                }
                item_function = Some(FunctionItem { first, body_open: i, body_close: j });
                i = j + 1;
                break;
            }
            if punct {
                match s {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    ";" if depth == 0 => {
                        i += 1;
                        break;
                    }
                    _ => {}
                }
            }
            prev = Some(i);
            i += 1;
        }
        match item_function {
            Some(item) => {
                if let Some(&offset) = directives_in_item.first() {
                    return Err(ParseError::DirectiveInBody { offset });
                }
                if function.is_some() {
                    return Err(ParseError::MultipleFunctions);
                }
                function = Some(item);
            }
            None => {
                if function.is_some() {
                    // Declarations after the function definition.
                    return Err(ParseError::NotAFunction);
                }
            }
        }
    }
    let item = function.ok_or(ParseError::NotAFunction)?;
    let preamble_end = all[item.first].span.start;
    let pre_toks: Vec<Token> = all.iter().copied().filter(|tk| tk.span.end <= preamble_end && tk.kind != TokenKind::Directive).collect();
    let typedefs = collect_typedefs(text, &pre_toks);

    // Positions below index into the directive-free token list.
    let toks: Vec<Token> = all.iter().copied().filter(|tk| tk.kind != TokenKind::Directive).collect();
    let index_of = |orig: usize| toks.iter().position(|tk| tk.span == all[orig].span).expect("token present");
    let first = index_of(item.first);
    let body_open = index_of(item.body_open);
    let body_close = index_of(item.body_close);

    let mut b = Builder::new(text, toks, typedefs);
    b.limit = body_close + 1;

    // Header: `<type> name ( params ) [attributes]`.
    let mut depth = 0usize;
    let mut name_tok = None;
    let mut j = first;
    while j < body_open {
        match b.tok_text(j) {
            "(" | "[" => {
                if depth == 0
                    && b.tok_text(j) == "("
                    && j > first
                    && b.is_ident_at(j - 1)
                    && name_tok.is_none()
                {
                    name_tok = Some(j - 1);
                }
                depth += 1;
            }
            ")" | "]" => depth -= 1,
            _ => {}
        }
        j += 1;
    }
    let name_tok = name_tok.ok_or(ParseError::NotAFunction)?;
    if name_tok == first {
        return Err(ParseError::NotAFunction);
    }
    let params_open = name_tok + 1;
    let params_end = b.matching(params_open).map_err(|_| ParseError::NotAFunction)?;
    let mut k = params_end;
    while k < body_open {
        if matches!(b.tok_text(k), "__attribute__" | "__attribute") && b.tok_text(k + 1) == "(" {
            k = b.matching(k + 1).map_err(|_| ParseError::NotAFunction)?;
        } else {
            return Err(ParseError::NotAFunction);
        }
    }

    let name = b.add(NodeKind::Identifier, Span::new(b.start_of(name_tok), b.end_of(name_tok)), Vec::new());
    let params = parse_params(&mut b, params_open, params_end);
    let param_list = b.add(
        NodeKind::ParamList,
        Span::new(b.start_of(params_open), b.end_of(params_end - 1)),
        params,
    );
    b.pos = body_open;
    let body = b.parse_compound().map_err(|_| ParseError::NotAFunction)?;
    if b.pos != body_close + 1 {
        return Err(ParseError::NotAFunction);
    }
    let ret_type = text[b.start_of(first)..b.start_of(name_tok)].trim().to_string();
    let root = b.add(
        NodeKind::FunctionDef,
        Span::new(b.start_of(first), b.end_of(body_close)),
        vec![name, param_list, body],
    );
    b.nodes[root].type_text = Some(ret_type);
    Ok(b.finish(root, text))
}

fn parse_params(b: &mut Builder<'_>, open: usize, end: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut depth = 0usize;
    let mut start = open + 1;
    for j in open + 1..end - 1 {
        match b.tok_text(j) {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            "," if depth == 0 => {
                groups.push((start, j));
                start = j + 1;
            }
            _ => {}
        }
    }
    groups.push((start, end - 1));
    for (s, e) in groups {
        if e <= s || (e - s == 1 && matches!(b.tok_text(s), "void" | "...")) {
            continue;
        }
        // Function-pointer parameter: name is inside the first paren group.
        let mut name = None;
        let mut d = 0usize;
        for j in s..e {
            match b.tok_text(j) {
                "(" => {
                    if d == 0 && name.is_none() && b.tok_text(j + 1) == "*" {
                        name = (j + 1..e).find(|&x| b.is_ident_at(x));
                    }
                    d += 1;
                }
                "[" => d += 1,
                ")" | "]" => d -= 1,
                _ => {
                    if d == 0 && name.is_none() && b.is_ident_at(j) && j > s {
                        let next = b.tok_text(j + 1);
                        if j + 1 == e || matches!(next, "[" | "__attribute__") {
                            name = Some(j);
                        }
                    }
                }
            }
        }
        let Some(n) = name else { continue };
        let name_span = Span::new(b.start_of(n), b.end_of(n));
        let prefix = b.text[b.start_of(s)..name_span.start].trim();
        let suffix = b.text[name_span.end..b.end_of(e - 1)].trim();
        let type_text = if suffix.is_empty() { prefix.to_string() } else { format!("{prefix}{suffix}") };
        let id = b.add(NodeKind::Identifier, name_span, Vec::new());
        b.nodes[id].type_text = Some(type_text);
        out.push(id);
    }
    out
}

/// Parses a standalone expression (test and tooling support).
pub fn parse_expression(text: &str) -> Result<Ast, ParseError> {
    let toks = tokenize(text)?;
    check_balance(&toks, text)?;
    let mut b = Builder::new(text, toks, HashSet::new());
    let root = b.parse_expr().map_err(|_| ParseError::InvalidFragment)?;
    if !b.at_end() {
        return Err(ParseError::InvalidFragment);
    }
    Ok(b.finish(root, text))
}

/// Parses a standalone statement (test and tooling support).
pub fn parse_statement(text: &str) -> Result<Ast, ParseError> {
    let toks = tokenize(text)?;
    check_balance(&toks, text)?;
    if toks.iter().any(|t| t.kind == TokenKind::Directive) {
        return Err(ParseError::InvalidFragment);
    }
    let mut b = Builder::new(text, toks, HashSet::new());
    if b.at_end() {
        return Err(ParseError::InvalidFragment);
    }
    let root = b.parse_statement();
    if !b.at_end() {
        return Err(ParseError::InvalidFragment);
    }
    Ok(b.finish(root, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Ast {
        parse_text(text).unwrap_or_else(|e| panic!("{e}: {text}"))
    }

    fn kinds(ast: &Ast, id: NodeId) -> Vec<NodeKind> {
        ast.descendants(id).map(|n| ast.kind(n)).collect()
    }

    #[test]
    fn minimal_function() {
        let ast = p("int f(void) { return 0; }");
        assert_eq!(ast.kind(ast.root), NodeKind::FunctionDef);
        assert_eq!(ast.function_name(), "f");
        assert!(ast.params().is_empty());
        let body = ast.body();
        assert_eq!(ast.children(body).len(), 1);
        assert_eq!(ast.kind(ast.children(body)[0]), NodeKind::ReturnStmt);
        assert_eq!(ast.node(ast.root).type_text.as_deref(), Some("int"));
    }

    #[test]
    fn precedence_puts_multiplication_under_addition() {
        let ast = p("int f() { x = a + b * c; }");
        let stmt = ast.children(ast.body())[0];
        assert_eq!(
            kinds(&ast, stmt),
            [
                NodeKind::ExprStmt,
                NodeKind::AssignExpr,
                NodeKind::Identifier,
                NodeKind::BinaryExpr,
                NodeKind::Identifier,
                NodeKind::BinaryExpr,
                NodeKind::Identifier,
                NodeKind::Identifier,
            ]
        );
        let add = ast.children(ast.children(stmt)[0])[1];
        assert_eq!(ast.node(add).op(), "+");
        assert_eq!(ast.node(ast.children(add)[1]).op(), "*");
        assert_eq!(ast.text(ast.children(add)[1]), "b * c");
    }

    #[test]
    fn directive_in_preamble_vs_body() {
        let ast = p("#define N 4\nint f(){return N;}");
        assert_eq!(ast.preamble(), "#define N 4\n");
        assert!(matches!(
            parse_text("int f(){\n#define N 4\nreturn N;}"),
            Err(ParseError::DirectiveInBody { .. })
        ));
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_text("int f() { return (0; }"), Err(ParseError::UnbalancedDelimiters { .. })));
        assert!(matches!(parse_text("int f() { } int g() { }"), Err(ParseError::MultipleFunctions)));
        assert_eq!(parse_text("int x = 3;").unwrap_err(), ParseError::NotAFunction);
        assert_eq!(parse_text("").unwrap_err(), ParseError::NotAFunction);
        assert_eq!(parse_text("int f() { } int y;").unwrap_err(), ParseError::NotAFunction);
    }

    #[test]
    fn preamble_typedefs_and_declarations() {
        let ast = p("typedef unsigned int u32;\nstruct s { int a; };\nstatic u32 g(u32 v, struct s *p) { u32 w = v; return w + p->a; }");
        assert_eq!(ast.function_name(), "g");
        let params: Vec<_> = ast.params().iter().map(|&i| (ast.text(i), ast.node(i).type_text.clone().unwrap())).collect();
        assert_eq!(params, [("v", "u32".to_string()), ("p", "struct s *".to_string())]);
        let decl = ast.children(ast.body())[0];
        assert_eq!(ast.kind(decl), NodeKind::DeclStmt);
        assert_eq!(ast.node(decl).type_text.as_deref(), Some("u32"));
    }

    #[test]
    fn declarators_carry_their_types() {
        let ast = p("void f(unsigned long n, int a[]) { int x = 1, *y, z[4]; }");
        let types: Vec<_> = ast.params().iter().map(|&i| ast.node(i).type_text.clone().unwrap()).collect();
        assert_eq!(types, ["unsigned long", "int[]"]);
        let decl = ast.children(ast.body())[0];
        let decls: Vec<_> = ast
            .children(decl)
            .iter()
            .filter(|&&c| ast.node(c).type_text.is_some())
            .map(|&c| (ast.text(c).to_string(), ast.node(c).type_text.clone().unwrap()))
            .collect();
        assert_eq!(
            decls,
            [("x".into(), "int".into()), ("y".into(), "int *".into()), ("z".into(), "int [4]".into())]
        );
    }

    #[test]
    fn statements_of_every_kind() {
        let src = "int f(int n) {\n  int i, s = 0;\n  for (i = 0; i < n; i++) s += i;\n  while (s > 10) s--;\n  do { s++; } while (s < 3);\n  switch (s) { case 1: s = 2; break; default: break; }\n  if (s) goto out; else s = 1;\nout:\n  return s ? s : -1;\n}";
        let ast = p(src);
        let body_kinds: Vec<_> = ast.children(ast.body()).iter().map(|&c| ast.kind(c)).collect();
        assert_eq!(
            body_kinds,
            [
                NodeKind::DeclStmt,
                NodeKind::ForStmt,
                NodeKind::WhileStmt,
                NodeKind::DoWhileStmt,
                NodeKind::SwitchStmt,
                NodeKind::IfStmt,
                NodeKind::LabelStmt,
            ]
        );
        let for_stmt = ast.children(ast.body())[1];
        let fc = ast.for_clauses(for_stmt);
        assert_eq!(ast.text(fc.init.unwrap()), "i = 0");
        assert_eq!(ast.text(fc.cond.unwrap()), "i < n");
        assert_eq!(ast.text(fc.update.unwrap()), "i++");
        let label = ast.children(ast.body())[6];
        assert_eq!(ast.node(label).op(), "out");
        assert_eq!(ast.kind(ast.children(label)[0]), NodeKind::ReturnStmt);
    }

    #[test]
    fn unsupported_statements_become_opaque() {
        let ast = p("int f(int *p) { int r = ({ int t = 1; t; }); list_for_each(p, q) { r++; } __asm__ volatile (\"nop\"); return r; }");
        let kinds: Vec<_> = ast.children(ast.body()).iter().map(|&c| ast.kind(c)).collect();
        assert_eq!(kinds, [NodeKind::OpaqueStmt, NodeKind::OpaqueStmt, NodeKind::OpaqueStmt, NodeKind::ReturnStmt]);
        for &c in ast.children(ast.body()) {
            if ast.kind(c) == NodeKind::OpaqueStmt {
                assert!(ast.children(c).is_empty());
            }
        }
        assert_eq!(ast.text(ast.children(ast.body())[1]), "list_for_each(p, q) { r++; }");
    }

    #[test]
    fn casts_sizeof_and_members() {
        let ast = p("int f(char *s) { return (int)sizeof(struct x) + (unsigned char)s[0] + s->len + (s) - sizeof s; }");
        let kinds: Vec<_> = ast.descendants(ast.body()).map(|n| ast.kind(n)).collect();
        assert_eq!(kinds.iter().filter(|k| **k == NodeKind::CastExpr).count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == NodeKind::ParenExpr).count(), 1);
        assert_eq!(kinds.iter().filter(|k| **k == NodeKind::MemberExpr).count(), 1);
    }

    #[test]
    fn dangling_else_binds_to_inner_if() {
        let ast = p("void f(int a, int b) { if (a) if (b) g(); else h(); }");
        let outer = ast.children(ast.body())[0];
        assert_eq!(ast.children(outer).len(), 2);
        let inner = ast.children(outer)[1];
        assert_eq!(ast.children(inner).len(), 3);
    }

    #[test]
    fn spans_nest_and_ids_are_preorder() {
        let ast = p("int f(int a) { if (a > 1) { a = a * 2 + 1; } else a--; return a; }");
        for n in &ast.nodes {
            let mut prev_end = n.span.start;
            for &c in &n.children {
                assert!(n.span.contains(ast.node(c).span));
                assert!(ast.node(c).span.start >= prev_end);
                prev_end = ast.node(c).span.end;
                assert!(c > n.id);
            }
        }
    }

    #[test]
    fn fragments() {
        let e = parse_expression("a + b * c").unwrap();
        assert_eq!(e.kind(e.root), NodeKind::BinaryExpr);
        let s = parse_statement("if (x) y = 1;").unwrap();
        assert_eq!(s.kind(s.root), NodeKind::IfStmt);
        assert!(parse_expression("a +").is_err());
    }
}
