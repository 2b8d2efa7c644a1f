//! Code property graph: syntax edges, a statement-level control-flow graph
//! and def-use chains from a reaching-definitions fixpoint.
//!
//! Node ids `0..n` are the AST node ids; `n` and `n + 1` are the synthetic
//! entry and exit nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{tokenize, Ast, NodeId, NodeKind, Span, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EdgeKind {
    Ast,
    Cfg,
    Duc,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CpgEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    /// Variable carried by a def-use edge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Def {
    pub var: String,
    /// A strong definition overwrites the variable; a weak one may.
    pub strong: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpgNode {
    pub id: usize,
    pub kind: String,
    pub span: Option<Span>,
}

#[derive(Debug, Clone)]
pub struct Cpg {
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
    pub entry: usize,
    pub exit: usize,
    /// Control-flow nodes, entry and exit included.
    pub cfg_nodes: BTreeSet<usize>,
    /// Statement nodes no path from entry reaches.
    pub unreachable: BTreeSet<usize>,
    pub defs: BTreeMap<usize, Vec<Def>>,
    pub uses: BTreeMap<usize, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CpgError {
    #[error("goto targets missing label `{0}`")]
    UnresolvedGoto(String),
}

impl Cpg {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// 2|E| / |V|.
    pub fn average_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.nodes.len() as f64
        }
    }

    pub fn cfg_successors(&self, id: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Cfg && e.src == id)
            .map(|e| e.dst)
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "nodes": self.nodes, "edges": self.edges })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cpg {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  n{} [label=\"{} {}\"];", n.id, n.id, n.kind);
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Ast => "solid",
                EdgeKind::Cfg => "bold",
                EdgeKind::Duc => "dashed",
            };
            let label = match &e.var {
                Some(v) => format!("DUC {v}"),
                None => format!("{:?}", e.kind).to_uppercase(),
            };
            let _ = writeln!(out, "  n{} -> n{} [style={style}, label=\"{label}\"];", e.src, e.dst);
        }
        out.push_str("}\n");
        out
    }
}

struct LoopCtx {
    breaks: Vec<usize>,
    continue_to: Option<usize>,
}

struct SwitchCtx {
    node: usize,
    has_default: bool,
}

struct CfgBuilder<'a> {
    ast: &'a Ast,
    edges: BTreeSet<(usize, usize)>,
    nodes: BTreeSet<usize>,
    exit: usize,
    breakable: Vec<LoopCtx>,
    switches: Vec<SwitchCtx>,
    labels: HashMap<&'a str, usize>,
    gotos: Vec<(usize, &'a str)>,
}

impl<'a> CfgBuilder<'a> {
    fn connect(&mut self, preds: &[usize], to: usize) {
        self.nodes.insert(to);
        for &p in preds {
            self.edges.insert((p, to));
        }
    }

    /// First control-flow node executed by `id`, if it executes any.
    fn first_node(&self, id: NodeId) -> Option<usize> {
        let ast = self.ast;
        match ast.kind(id) {
            NodeKind::CompoundStmt => ast.children(id).iter().find_map(|&c| self.first_node(c)),
            NodeKind::ForStmt => Some(ast.for_clauses(id).init.unwrap_or(id)),
            NodeKind::DoWhileStmt => self.first_node(ast.children(id)[0]).or(Some(id)),
            _ => Some(id),
        }
    }

    /// Adds `id` to the graph reached from `preds`; returns the nodes that
    /// fall through to whatever follows.
    fn stmt(&mut self, id: NodeId, preds: Vec<usize>) -> Vec<usize> {
        let ast = self.ast;
        let children = ast.children(id);
        match ast.kind(id) {
            NodeKind::CompoundStmt => children.iter().fold(preds, |cur, &c| self.stmt(c, cur)),
            NodeKind::IfStmt => {
                self.connect(&preds, id);
                let mut ends = self.stmt(children[1], vec![id]);
                match children.get(2) {
                    Some(&e) => ends.extend(self.stmt(e, vec![id])),
                    None => ends.push(id),
                }
                ends
            }
            NodeKind::WhileStmt => {
                self.connect(&preds, id);
                self.breakable.push(LoopCtx { breaks: vec![], continue_to: Some(id) });
                let body_ends = self.stmt(children[1], vec![id]);
                self.connect(&body_ends, id);
                let ctx = self.breakable.pop().expect("pushed above");
                let mut ends = vec![id];
                ends.extend(ctx.breaks);
                ends
            }
            NodeKind::DoWhileStmt => {
                let body = children[0];
                self.breakable.push(LoopCtx { breaks: vec![], continue_to: Some(id) });
                let body_ends = self.stmt(body, preds.clone());
                self.connect(&body_ends, id);
                let back = self.first_node(body).unwrap_or(id);
                self.connect(&[id], back);
                let ctx = self.breakable.pop().expect("pushed above");
                let mut ends = vec![id];
                ends.extend(ctx.breaks);
                ends
            }
            NodeKind::ForStmt => {
                let clauses = ast.for_clauses(id);
                let body = *children.last().expect("for body");
                let mut cur = preds;
                if let Some(init) = clauses.init {
                    self.connect(&cur, init);
                    cur = vec![init];
                }
                self.connect(&cur, id);
                self.breakable.push(LoopCtx { breaks: vec![], continue_to: Some(clauses.update.unwrap_or(id)) });
                let body_ends = self.stmt(body, vec![id]);
                match clauses.update {
                    Some(upd) => {
                        self.connect(&body_ends, upd);
                        self.connect(&[upd], id);
                    }
                    None => self.connect(&body_ends, id),
                }
                let ctx = self.breakable.pop().expect("pushed above");
                let mut ends = ctx.breaks;
                if clauses.cond.is_some() {
                    ends.insert(0, id);
                }
                ends
            }
            NodeKind::SwitchStmt => {
                self.connect(&preds, id);
                self.breakable.push(LoopCtx { breaks: vec![], continue_to: None });
                self.switches.push(SwitchCtx { node: id, has_default: false });
                let body_ends = self.stmt(children[1], vec![]);
                let sw = self.switches.pop().expect("pushed above");
                let ctx = self.breakable.pop().expect("pushed above");
                let mut ends = body_ends;
                ends.extend(ctx.breaks);
                if !sw.has_default {
                    ends.push(id);
                }
                ends
            }
            NodeKind::CaseLabel => {
                self.connect(&preds, id);
                if let Some(sw) = self.switches.last_mut() {
                    sw.has_default |= ast.node(id).op() == "default";
                    let s = sw.node;
                    self.connect(&[s], id);
                }
                match children.last() {
                    Some(&c) if ast.kind(c).is_statement() => self.stmt(c, vec![id]),
                    _ => vec![id],
                }
            }
            NodeKind::LabelStmt => {
                self.connect(&preds, id);
                self.labels.insert(ast.node(id).op(), id);
                match children.first() {
                    Some(&c) => self.stmt(c, vec![id]),
                    None => vec![id],
                }
            }
            NodeKind::ReturnStmt => {
                self.connect(&preds, id);
                let exit = self.exit;
                self.connect(&[id], exit);
                vec![]
            }
            NodeKind::BreakStmt => {
                self.connect(&preds, id);
                if let Some(ctx) = self.breakable.last_mut() {
                    ctx.breaks.push(id);
                }
                vec![]
            }
            NodeKind::ContinueStmt => {
                self.connect(&preds, id);
                let target = self.breakable.iter().rev().find_map(|c| c.continue_to);
                if let Some(t) = target {
                    self.connect(&[id], t);
                }
                vec![]
            }
            NodeKind::GotoStmt => {
                self.connect(&preds, id);
                self.gotos.push((id, ast.node(id).op()));
                vec![]
            }
            _ => {
                self.connect(&preds, id);
                vec![id]
            }
        }
    }
}

/// Expression subtrees evaluated by a control-flow node.
fn evaluated_exprs(ast: &Ast, id: usize) -> Vec<NodeId> {
    if id >= ast.nodes.len() {
        return vec![];
    }
    let children = ast.children(id);
    match ast.kind(id) {
        NodeKind::IfStmt | NodeKind::WhileStmt | NodeKind::SwitchStmt => vec![children[0]],
        NodeKind::DoWhileStmt => vec![children[1]],
        NodeKind::ForStmt => ast.for_clauses(id).cond.into_iter().collect(),
        NodeKind::ExprStmt | NodeKind::ReturnStmt | NodeKind::DeclStmt => children.to_vec(),
        NodeKind::CaseLabel | NodeKind::LabelStmt | NodeKind::GotoStmt | NodeKind::BreakStmt | NodeKind::ContinueStmt => vec![],
        NodeKind::OpaqueStmt => vec![],
        // for-init and update expressions
        _ => vec![id],
    }
}

/// Variable a store into `lv` writes and whether the whole variable is
/// overwritten; `None` for stores through pointers.
fn store_target(ast: &Ast, mut lv: NodeId) -> Option<(String, bool)> {
    let mut whole = true;
    loop {
        match ast.kind(lv) {
            NodeKind::ParenExpr => lv = ast.children(lv)[0],
            NodeKind::Identifier => return Some((ast.text(lv).to_string(), whole)),
            NodeKind::IndexExpr => {
                whole = false;
                lv = ast.children(lv)[0];
            }
            NodeKind::MemberExpr if ast.node(lv).op() == "." => {
                whole = false;
                lv = ast.children(lv)[0];
            }
            _ => return None,
        }
    }
}

struct DefUse {
    defs: Vec<Def>,
    uses: BTreeSet<String>,
}

fn collect_def_use(ast: &Ast, id: usize, address_taken: &BTreeSet<String>, variables: &BTreeSet<String>) -> DefUse {
    let mut defs = Vec::new();
    let mut uses = BTreeSet::new();
    let weak_all = |defs: &mut Vec<Def>| {
        for v in address_taken {
            defs.push(Def { var: v.clone(), strong: false });
        }
    };
    if id < ast.nodes.len() && ast.kind(id) == NodeKind::OpaqueStmt {
        if let Ok(toks) = tokenize(ast.text(id)) {
            let text = ast.text(id);
            for t in toks.iter().filter(|t| t.kind == TokenKind::Ident) {
                let name = &text[t.span.start..t.span.end];
                if variables.contains(name) {
                    uses.insert(name.to_string());
                    defs.push(Def { var: name.to_string(), strong: false });
                }
            }
        }
        weak_all(&mut defs);
    }
    for root in evaluated_exprs(ast, id) {
        let mut skip: BTreeSet<NodeId> = BTreeSet::new();
        for n in ast.descendants(root) {
            let node = ast.node(n);
            match node.kind {
                NodeKind::AssignExpr | NodeKind::CompoundAssignExpr => {
                    let lv = node.children[0];
                    match store_target(ast, lv) {
                        Some((v, whole)) => {
                            defs.push(Def { var: v, strong: whole });
                            if node.kind == NodeKind::AssignExpr && whole {
                                skip.insert(crate::analysis::strip_parens(ast, lv));
                            }
                        }
                        None => weak_all(&mut defs),
                    }
                }
                NodeKind::UnaryExpr if matches!(node.op(), "++" | "--") => match store_target(ast, node.children[0]) {
                    Some((v, whole)) => defs.push(Def { var: v, strong: whole }),
                    None => weak_all(&mut defs),
                },
                NodeKind::CallExpr => weak_all(&mut defs),
                NodeKind::MemberExpr => {
                    skip.insert(node.children[1]);
                }
                NodeKind::DeclStmt => {}
                NodeKind::Identifier => {
                    let is_declarator = node.type_text.is_some();
                    if is_declarator {
                        let next = ast.parent(n).and_then(|p| {
                            let sib = ast.children(p);
                            let i = sib.iter().position(|&c| c == n)?;
                            sib.get(i + 1).copied()
                        });
                        let has_init = next.is_some_and(|s| !(ast.kind(s) == NodeKind::Identifier && ast.node(s).type_text.is_some()));
                        if has_init {
                            defs.push(Def { var: node_text(ast, n), strong: true });
                        }
                    } else if !skip.contains(&n) && variables.contains(ast.text(n)) {
                        uses.insert(node_text(ast, n));
                    }
                }
                _ => {}
            }
        }
    }
    defs.sort();
    defs.dedup();
    DefUse { defs, uses }
}

fn node_text(ast: &Ast, id: NodeId) -> String {
    ast.text(id).to_string()
}

pub fn build_cpg(ast: &Ast) -> Result<Cpg, CpgError> {
    let n = ast.nodes.len();
    let (entry, exit) = (n, n + 1);
    let mut nodes: Vec<CpgNode> = ast
        .nodes
        .iter()
        .map(|node| CpgNode { id: node.id, kind: node.kind.to_string(), span: Some(node.span) })
        .collect();
    nodes.push(CpgNode { id: entry, kind: "Entry".into(), span: None });
    nodes.push(CpgNode { id: exit, kind: "Exit".into(), span: None });

    let mut edges: Vec<CpgEdge> = Vec::new();
    for node in &ast.nodes {
        for &c in &node.children {
            edges.push(CpgEdge { src: node.id, dst: c, kind: EdgeKind::Ast, var: None });
        }
    }

    let mut b = CfgBuilder {
        ast,
        edges: BTreeSet::new(),
        nodes: BTreeSet::from([entry, exit]),
        exit,
        breakable: vec![],
        switches: vec![],
        labels: HashMap::new(),
        gotos: vec![],
    };
    let ends = b.stmt(ast.body(), vec![entry]);
    b.connect(&ends, exit);
    for (g, label) in std::mem::take(&mut b.gotos) {
        let target = *b.labels.get(label).ok_or_else(|| CpgError::UnresolvedGoto(label.to_string()))?;
        b.connect(&[g], target);
    }
    // statements the walk never attached (code after return/break, before the first case)
    for id in ast.descendants(ast.body()) {
        let kind = ast.kind(id);
        if kind.is_statement() && kind != NodeKind::CompoundStmt {
            b.nodes.insert(id);
        }
    }
    let cfg_edges = b.edges;
    let cfg_nodes = b.nodes;

    let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut pred: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(s, d) in &cfg_edges {
        succ.entry(s).or_default().push(d);
        pred.entry(d).or_default().push(s);
    }
    let mut reached = BTreeSet::from([entry]);
    let mut stack = vec![entry];
    while let Some(x) = stack.pop() {
        for &y in succ.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
            if reached.insert(y) {
                stack.push(y);
            }
        }
    }
    let unreachable: BTreeSet<usize> = cfg_nodes.iter().copied().filter(|x| !reached.contains(x) && *x != exit).collect();
    for &(s, d) in &cfg_edges {
        edges.push(CpgEdge { src: s, dst: d, kind: EdgeKind::Cfg, var: None });
    }

    // variables: parameters and locals
    let variables: BTreeSet<String> = ast
        .descendants(ast.root)
        .filter(|&i| ast.kind(i) == NodeKind::Identifier && ast.node(i).type_text.is_some())
        .filter(|&i| matches!(ast.parent(i).map(|p| ast.kind(p)), Some(NodeKind::ParamList | NodeKind::DeclStmt)))
        .map(|i| node_text(ast, i))
        .collect();
    let mut address_taken: BTreeSet<String> = BTreeSet::new();
    for i in ast.descendants(ast.root) {
        let node = ast.node(i);
        if node.kind == NodeKind::UnaryExpr && node.op() == "&" {
            if let Some((v, _)) = store_target(ast, node.children[0]) {
                address_taken.insert(v);
            }
        }
        if node.kind == NodeKind::Identifier && node.type_text.as_deref().is_some_and(|t| t.contains('[')) {
            address_taken.insert(node_text(ast, i));
        }
    }
    address_taken.retain(|v| variables.contains(v));

    let mut defs: BTreeMap<usize, Vec<Def>> = BTreeMap::new();
    let mut uses: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for &c in &cfg_nodes {
        let du = collect_def_use(ast, c, &address_taken, &variables);
        if !du.defs.is_empty() {
            defs.insert(c, du.defs);
        }
        if !du.uses.is_empty() {
            uses.insert(c, du.uses);
        }
    }

    // reaching definitions: facts are (defining node, variable)
    type Fact = (usize, String);
    let mut out: BTreeMap<usize, BTreeSet<Fact>> = cfg_nodes.iter().map(|&c| (c, BTreeSet::new())).collect();
    let mut inn: BTreeMap<usize, BTreeSet<Fact>> = out.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for &c in &cfg_nodes {
            let mut in_set = BTreeSet::new();
            for p in pred.get(&c).map(Vec::as_slice).unwrap_or(&[]) {
                in_set.extend(out[p].iter().cloned());
            }
            let mut out_set = in_set.clone();
            if let Some(ds) = defs.get(&c) {
                for d in ds.iter().filter(|d| d.strong) {
                    out_set.retain(|(_, v)| *v != d.var);
                }
                for d in ds {
                    out_set.insert((c, d.var.clone()));
                }
            }
            if out_set != out[&c] {
                out.insert(c, out_set);
                changed = true;
            }
            inn.insert(c, in_set);
        }
    }
    let mut duc = BTreeSet::new();
    for (&u, vars) in &uses {
        for (d, v) in &inn[&u] {
            if vars.contains(v) {
                duc.insert((*d, u, v.clone()));
            }
        }
    }
    for (s, d, v) in duc {
        edges.push(CpgEdge { src: s, dst: d, kind: EdgeKind::Duc, var: Some(v) });
    }

    Ok(Cpg { nodes, edges, entry, exit, cfg_nodes, unreachable, defs, uses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub node_delta: i64,
    pub edge_delta: BTreeMap<EdgeKind, i64>,
    pub avg_degree_before: f64,
    pub avg_degree_after: f64,
    /// `(after - before) / before * 100`; absent when `before` is 0.
    pub percent_change: Option<f64>,
}

pub fn graph_diff(before: &Cpg, after: &Cpg) -> GraphDelta {
    let edge_delta = [EdgeKind::Ast, EdgeKind::Cfg, EdgeKind::Duc]
        .into_iter()
        .map(|k| (k, after.edge_count(k) as i64 - before.edge_count(k) as i64))
        .collect();
    let (b, a) = (before.average_degree(), after.average_degree());
    GraphDelta {
        nodes_before: before.node_count(),
        nodes_after: after.node_count(),
        node_delta: after.node_count() as i64 - before.node_count() as i64,
        edge_delta,
        avg_degree_before: b,
        avg_degree_after: a,
        percent_change: (b > 0.0).then(|| (a - b) / b * 100.0),
    }
}
