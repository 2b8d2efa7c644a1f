use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-open byte range `[start, end)` into the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    FunctionDef,
    ParamList,
    CompoundStmt,
    IfStmt,
    WhileStmt,
    ForStmt,
    DoWhileStmt,
    SwitchStmt,
    CaseLabel,
    ReturnStmt,
    BreakStmt,
    ContinueStmt,
    GotoStmt,
    LabelStmt,
    DeclStmt,
    ExprStmt,
    AssignExpr,
    CompoundAssignExpr,
    BinaryExpr,
    UnaryExpr,
    TernaryExpr,
    CallExpr,
    IndexExpr,
    MemberExpr,
    CastExpr,
    ParenExpr,
    Identifier,
    Literal,
    OpaqueStmt,
}

impl NodeKind {
    pub fn is_statement(self) -> bool {
        use NodeKind::*;
        matches!(
            self,
            CompoundStmt
                | IfStmt
                | WhileStmt
                | ForStmt
                | DoWhileStmt
                | SwitchStmt
                | CaseLabel
                | ReturnStmt
                | BreakStmt
                | ContinueStmt
                | GotoStmt
                | LabelStmt
                | DeclStmt
                | ExprStmt
                | OpaqueStmt
        )
    }

    pub fn is_loop(self) -> bool {
        matches!(self, NodeKind::WhileStmt | NodeKind::ForStmt | NodeKind::DoWhileStmt)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which children of a `ForStmt` fill the three header clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForClauses {
    pub init: Option<NodeId>,
    pub cond: Option<NodeId>,
    pub update: Option<NodeId>,
}

/// One syntax node.
///
/// `op` holds the operator token for expression kinds (`"+"`, `"+="`, `"->"`,
/// `"sizeof"`, ...), `"case"`/`"default"` for case labels and the label name
/// for `LabelStmt`/`GotoStmt`. `type_text` holds the declared type for
/// `DeclStmt` (base specifiers), declarator/parameter identifiers, casts and
/// the function's return type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub span: Span,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub op: Option<String>,
    pub type_text: Option<String>,
    pub for_clauses: Option<ForClauses>,
}

impl AstNode {
    pub fn op(&self) -> &str {
        self.op.as_deref().unwrap_or("")
    }
}

/// Span-anchored syntax tree of one function definition. Node ids are dense
/// and assigned in preorder, so the root is always `0`.
#[derive(Debug, Clone)]
pub struct Ast {
    pub nodes: Vec<AstNode>,
    pub root: NodeId,
    pub source: String,
}

impl Ast {
    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn text(&self, id: NodeId) -> &str {
        let s = self.nodes[id].span;
        &self.source[s.start..s.end]
    }

    pub fn span_text(&self, span: Span) -> &str {
        &self.source[span.start..span.end]
    }

    /// Bytes before the function definition (directives, typedefs, ...).
    pub fn preamble(&self) -> &str {
        &self.source[..self.nodes[self.root].span.start]
    }

    /// The function definition's own text, without preamble.
    pub fn function_text(&self) -> &str {
        self.text(self.root)
    }

    pub fn body(&self) -> NodeId {
        *self.children(self.root).last().expect("function has a body")
    }

    pub fn function_name(&self) -> &str {
        self.text(self.children(self.root)[0])
    }

    pub fn params(&self) -> &[NodeId] {
        self.children(self.children(self.root)[1])
    }

    /// Preorder walk of the subtree rooted at `id`, `id` included.
    pub fn descendants(&self, id: NodeId) -> Descendants<'_> {
        Descendants { ast: self, stack: vec![id] }
    }

    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.parent(id), move |&p| self.parent(p))
    }

    pub fn is_ancestor(&self, ancestor: NodeId, id: NodeId) -> bool {
        self.ancestors(id).any(|a| a == ancestor)
    }

    pub fn for_clauses(&self, id: NodeId) -> ForClauses {
        self.nodes[id].for_clauses.unwrap_or_default()
    }

    /// `(cond, then, else)` of an `IfStmt`.
    pub fn if_parts(&self, id: NodeId) -> (NodeId, NodeId, Option<NodeId>) {
        let c = self.children(id);
        (c[0], c[1], c.get(2).copied())
    }

    /// Shape of the subtree as nested kinds, ignoring spans; used to compare
    /// parses of different texts.
    pub fn shape(&self, id: NodeId) -> Shape {
        Shape {
            kind: self.kind(id),
            op: self.nodes[id].op.clone(),
            children: self.children(id).iter().map(|&c| self.shape(c)).collect(),
        }
    }

    /// The innermost node whose span is exactly `span`, if any.
    pub fn node_at(&self, span: Span) -> Option<NodeId> {
        self.nodes.iter().rev().find(|n| n.span == span).map(|n| n.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    pub kind: NodeKind,
    pub op: Option<String>,
    pub children: Vec<Shape>,
}

pub struct Descendants<'a> {
    ast: &'a Ast,
    stack: Vec<NodeId>,
}

impl Iterator for Descendants<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let id = self.stack.pop()?;
        self.stack.extend(self.ast.children(id).iter().rev());
        Some(id)
    }
}
