//! Identifier-renaming baseline: rewrites one local variable name throughout
//! the function and changes nothing else.

use crate::analysis::identifier_names;
use crate::parser::{tokenize, Ast, Edit, NodeKind, Span, TokenKind};

/// Renames the first declared parameter or local (in source order) to a
/// fresh name. Returns `None` when there is nothing safe to rename.
pub fn rename_variant(ast: &Ast) -> Option<String> {
    let preamble_names = tokenize(ast.preamble()).ok()?;
    let in_preamble = |name: &str| {
        preamble_names
            .iter()
            .any(|t| t.kind == TokenKind::Ident && &ast.preamble()[t.span.start..t.span.end] == name)
    };
    let name = ast
        .descendants(ast.root)
        .filter(|&n| ast.kind(n) == NodeKind::Identifier && ast.node(n).type_text.is_some())
        .filter(|&n| matches!(ast.parent(n).map(|p| ast.kind(p)), Some(NodeKind::ParamList | NodeKind::DeclStmt)))
        .map(|n| ast.text(n))
        .find(|name| !in_preamble(name))?;
    let used = identifier_names(ast);
    let fresh = (0..).map(|k| format!("{name}_v{k}")).find(|n| !used.contains(n))?;

    let base = ast.node(ast.root).span.start;
    let func = ast.function_text();
    let toks = tokenize(func).ok()?;
    let mut edits = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Ident || &func[t.span.start..t.span.end] != name {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| &func[toks[j].span.start..toks[j].span.end]);
        if matches!(prev, Some("." | "->" | "struct" | "union" | "enum")) {
            continue;
        }
        edits.push(Edit::replace(Span::new(base + t.span.start, base + t.span.end), fresh.clone()));
    }
    crate::parser::rewrite(&ast.source, &edits).ok()
}
