//! Random well-formed C functions for round-trip checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spt_core::parser::{parse_text, rewrite, Edit, NodeKind};

/// No-op rewrite, then every leaf replaced by its own text.
pub fn assert_round_trip(text: &str) {
    let ast = parse_text(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    assert_eq!(ast.source, text);
    assert_eq!(rewrite(text, &[]).unwrap(), text);
    let edits: Vec<Edit> = ast
        .descendants(ast.root)
        .filter(|&n| matches!(ast.kind(n), NodeKind::Identifier | NodeKind::Literal))
        .map(|n| Edit::replace(ast.node(n).span, ast.text(n)))
        .collect();
    assert_eq!(rewrite(text, &edits).unwrap(), text);
}

/// True iff the parser structured every statement.
pub fn fully_structured(text: &str) -> bool {
    let ast = parse_text(text).unwrap();
    !ast.descendants(ast.root).any(|n| ast.kind(n) == NodeKind::OpaqueStmt)
}

pub struct Gen {
    rng: ChaCha8Rng,
    vars: Vec<&'static str>,
    depth: usize,
    in_loop: bool,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed), vars: Vec::new(), depth: 0, in_loop: false }
    }
}

const VARS: &[&str] = &["a", "b", "n", "len", "err", "idx"];
const BIN: &[&str] = &["+", "-", "*", "/", "%", "<<", ">>", "&", "|", "^", "<", "<=", ">", ">=", "==", "!=", "&&", "||"];
const ASSIGN: &[&str] = &["=", "+=", "-=", "*=", "|=", "&=", "^=", "<<=", ">>="];

impl Gen {
    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs.choose(&mut self.rng).unwrap()
    }

    fn ws(&mut self) -> &'static str {
        ["", " ", "  ", "\t", " /* c */ "][self.rng.gen_range(0..10usize).saturating_sub(5).min(4)]
    }

    fn var(&mut self) -> &'static str {
        *self.vars.choose(&mut self.rng).unwrap()
    }

    fn expr(&mut self, depth: usize) -> String {
        if depth == 0 {
            return match self.rng.gen_range(0..8) {
                0 => format!("{}", self.rng.gen_range(0..1000)),
                1 => format!("0x{:X}u", self.rng.gen_range(0..4096)),
                2 => "'\\n'".to_string(),
                3 => format!("buf[{}]", self.var()),
                4 => format!("p->{}", self.pick(&["x", "y"])),
                _ => self.var().to_string(),
            };
        }
        match self.rng.gen_range(0..10) {
            0 => format!("({})", self.expr(depth - 1)),
            1 => format!("!{}", self.expr(depth - 1)),
            2 => format!("-({})", self.expr(depth - 1)),
            3 => format!("g({}, {})", self.expr(depth - 1), self.expr(0)),
            4 => format!("{} ? {} : {}", self.expr(0), self.expr(depth - 1), self.expr(0)),
            5 => format!("(long){}", self.expr(depth - 1)),
            6 => format!("sizeof({})", self.pick(&["int", "buf", "struct pt"])),
            _ => {
                let op = self.pick(BIN);
                let (l, r) = (self.expr(depth - 1), self.expr(depth - 1));
                let ws = self.ws();
                format!("{l}{ws}{op} {r}")
            }
        }
    }

    fn block(&mut self, indent: usize) -> String {
        let n = self.rng.gen_range(1..4);
        let pad = "    ".repeat(indent);
        let body: String = (0..n).map(|_| self.stmt(indent + 1)).collect();
        format!("{{\n{body}{pad}}}")
    }

    fn stmt(&mut self, indent: usize) -> String {
        let pad = "    ".repeat(indent);
        let leaf = self.depth >= 3;
        let choice = if leaf { self.rng.gen_range(0..4) } else { self.rng.gen_range(0..11) };
        self.depth += 1;
        let s = match choice {
            0 => format!("{pad}{} {} {};\n", self.var(), self.pick(ASSIGN), self.expr(2)),
            1 => format!("{pad}{}++;\n", self.var()),
            2 => format!("{pad}int t{} = {};\n", self.rng.gen_range(0..100), self.expr(1)),
            3 => {
                if self.in_loop && self.rng.gen_bool(0.3) {
                    format!("{pad}{};\n", self.pick(&["break", "continue"]))
                } else {
                    format!("{pad}h({});{}\n", self.expr(1), self.pick(&["", " // call"]))
                }
            }
            4 => format!("{pad}if ({}) {}\n", self.expr(2), self.block(indent)),
            5 => format!("{pad}if ({})\n{}{pad}else {}\n", self.expr(2), self.stmt(indent + 1), self.block(indent)),
            6 => {
                let was = std::mem::replace(&mut self.in_loop, true);
                let s = format!("{pad}while ({}) {}\n", self.expr(1), self.block(indent));
                self.in_loop = was;
                s
            }
            7 => {
                let was = std::mem::replace(&mut self.in_loop, true);
                let v = self.var();
                let s = format!("{pad}for ({v} = 0; {v} < {}; {v}++) {}\n", self.expr(1), self.block(indent));
                self.in_loop = was;
                s
            }
            8 => {
                let was = std::mem::replace(&mut self.in_loop, true);
                let s = format!("{pad}do {} while ({});\n", self.block(indent), self.expr(1));
                self.in_loop = was;
                s
            }
            9 => format!(
                "{pad}switch ({}) {{\n{pad}case 1:\n{}{pad}    break;\n{pad}default:\n{}{pad}}}\n",
                self.var(),
                self.stmt(indent + 1),
                self.stmt(indent + 1)
            ),
            _ => format!("{pad}return {};\n", self.expr(1)),
        };
        self.depth -= 1;
        s
    }

    pub fn function(&mut self, k: usize) -> String {
        let preamble = match k % 4 {
            0 => "",
            1 => "#include <stdio.h>\n",
            2 => "struct pt { int x, y; };\n/* helper */\n",
            _ => "#define LIMIT 16\ntypedef unsigned int u32;\n\n",
        };
        let mut vars = VARS.to_vec();
        vars.shuffle(&mut self.rng);
        vars.truncate(self.rng.gen_range(2..=VARS.len()));
        self.vars = vars;
        let params: Vec<String> = self.vars.iter().map(|v| format!("int {v}")).collect();
        let body: String = (0..self.rng.gen_range(1..6)).map(|_| self.stmt(1)).collect();
        format!(
            "{preamble}static int fn{k}({}, unsigned char *buf, struct pt *p)\n{{\n{body}    return 0;\n}}\n",
            params.join(", ")
        )
    }
}
