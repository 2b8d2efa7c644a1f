//! Brute-force def-use chains by CFG path enumeration.

use std::collections::BTreeSet;

use spt_core::cpg::{Cpg, EdgeKind};
use spt_core::parser::Ast;

pub fn loop_free(ast: &Ast) -> bool {
    !ast.descendants(ast.root).any(|n| ast.kind(n).is_loop())
}

/// Walks every path leaving `n`, recording uses of `var` until a strong
/// redefinition ends the path.
fn walk(cpg: &Cpg, n: usize, def: usize, var: &str, out: &mut BTreeSet<(usize, usize, String)>) {
    if cpg.uses.get(&n).is_some_and(|u| u.contains(var)) {
        out.insert((def, n, var.to_string()));
    }
    if cpg.defs.get(&n).is_some_and(|ds| ds.iter().any(|x| x.var == var && x.strong)) {
        return;
    }
    for s in cpg.cfg_successors(n) {
        walk(cpg, s, def, var, out);
    }
}

/// (def node, use node, var) for every CFG path from a definition to a use
/// of the same variable that no strong redefinition interrupts.
pub fn enumerate(cpg: &Cpg) -> BTreeSet<(usize, usize, String)> {
    let mut out = BTreeSet::new();
    for (&d, defs) in &cpg.defs {
        for def in defs {
            for s in cpg.cfg_successors(d) {
                walk(cpg, s, d, &def.var, &mut out);
            }
        }
    }
    out
}

pub fn duc_edges(cpg: &Cpg) -> BTreeSet<(usize, usize, String)> {
    cpg.edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Duc)
        .map(|e| (e.src, e.dst, e.var.clone().expect("DUC edges name their variable")))
        .collect()
}
