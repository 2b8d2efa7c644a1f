//! Syntax-only compilation of a unit with declaration stubs for functions it
//! calls but does not declare.

use std::collections::BTreeSet;
use std::process::{Command, Output};

use super::HarnessError;
use crate::parser::{parse_text, tokenize, Ast, NodeKind, TokenKind};

/// A compiler command line such as `cc` or `clang -m64`; the first word is
/// the program, the rest are extra arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilerSpec {
    pub program: String,
    pub args: Vec<String>,
}

impl CompilerSpec {
    pub fn parse(command: &str) -> Self {
        let mut words = command.split_whitespace().map(str::to_string);
        let program = words.next().unwrap_or_else(|| "cc".to_string());
        CompilerSpec { program, args: words.collect() }
    }

    pub(crate) fn run(&self, extra: &[&str]) -> Result<Output, HarnessError> {
        Command::new(&self.program)
            .args(&self.args)
            .args(extra)
            .output()
            .map_err(|e| HarnessError::CompilerSpawnFailure(format!("{}: {e}", self.program)))
    }
}

impl Default for CompilerSpec {
    fn default() -> Self {
        CompilerSpec::parse("cc")
    }
}

/// Warnings that newer compilers promote to errors but that stubs with an
/// `int` return type can trigger.
pub(crate) const LENIENT_FLAGS: &[&str] = &[
    "-std=gnu11",
    "-w",
    "-Wno-error=implicit-function-declaration",
    "-Wno-error=int-conversion",
    "-Wno-error=incompatible-pointer-types",
];

/// Called identifiers that are neither declared in the preamble nor local.
fn undeclared_callees(ast: &Ast) -> BTreeSet<String> {
    let preamble: BTreeSet<String> = tokenize(ast.preamble())
        .map(|toks| {
            toks.iter()
                .filter(|t| t.kind == TokenKind::Ident)
                .map(|t| ast.preamble()[t.span.start..t.span.end].to_string())
                .collect()
        })
        .unwrap_or_default();
    let locals: BTreeSet<&str> = ast
        .descendants(ast.root)
        .filter(|&n| ast.kind(n) == NodeKind::Identifier && ast.node(n).type_text.is_some())
        .map(|n| ast.text(n))
        .collect();
    ast.descendants(ast.root)
        .filter(|&n| ast.kind(n) == NodeKind::CallExpr)
        .map(|n| ast.children(n)[0])
        .filter(|&c| ast.kind(c) == NodeKind::Identifier)
        .map(|c| ast.text(c))
        .filter(|name| !preamble.contains(*name) && !locals.contains(name) && *name != ast.function_name())
        .filter(|name| !name.starts_with("__builtin"))
        .map(str::to_string)
        .collect()
}

/// The unit's text with `int name();` stubs placed before the function.
pub fn with_stubs(text: &str) -> String {
    let Ok(ast) = parse_text(text) else { return text.to_string() };
    let stubs: String = undeclared_callees(&ast).iter().map(|n| format!("int {n}();\n")).collect();
    let start = ast.node(ast.root).span.start;
    format!("{}{stubs}{}", &text[..start], &text[start..])
}

/// True iff the unit (preamble included, stubs added) compiles in
/// syntax-only mode.
pub fn compile_check(compiler: &CompilerSpec, text: &str) -> Result<bool, HarnessError> {
    let dir = tempfile::tempdir().map_err(|e| HarnessError::Io(e.to_string()))?;
    let path = dir.path().join("unit.c");
    std::fs::write(&path, with_stubs(text)).map_err(|e| HarnessError::Io(e.to_string()))?;
    let path = path.to_string_lossy().into_owned();
    let mut args: Vec<&str> = vec!["-fsyntax-only"];
    args.extend(LENIENT_FLAGS);
    args.push(&path);
    let out = compiler.run(&args)?;
    if !out.status.success() {
        log::debug!("compile failed:\n{}", String::from_utf8_lossy(&out.stderr));
    }
    Ok(out.status.success())
}
