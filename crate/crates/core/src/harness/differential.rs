//! Differential execution of a function and a variant on sampled inputs.
//!
//! Each version is compiled together with a generated driver that reads one
//! input vector per line, forks, calls the function in the child under a
//! two-second alarm, and prints the return value, the final contents of
//! every array argument and the child's exit status.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::compile::{CompilerSpec, LENIENT_FLAGS};
use super::HarnessError;
use crate::parser::{parse_text, Ast};

pub const ARRAY_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntSpec {
    pub bits: u32,
    pub signed: bool,
}

impl IntSpec {
    /// Parses a plain integer type (qualifiers allowed).
    pub fn parse(words: &[&str]) -> Option<IntSpec> {
        let mut unsigned = false;
        let (mut chars, mut shorts, mut ints, mut longs, mut signed) = (0, 0, 0, 0, false);
        for &w in words {
            match w {
                "unsigned" => unsigned = true,
                "signed" => signed = true,
                "char" => chars += 1,
                "short" => shorts += 1,
                "int" => ints += 1,
                "long" => longs += 1,
                _ => return None,
            }
        }
        if (unsigned && signed) || chars + shorts + ints + longs + usize::from(unsigned || signed) == 0 {
            return None;
        }
        let bits = match (chars, shorts, longs) {
            (1, 0, 0) if ints == 0 => 8,
            (0, 1, 0) => 16,
            (0, 0, 0) => 32,
            (0, 0, 1 | 2) => 64,
            _ => return None,
        };
        Some(IntSpec { bits, signed: !unsigned })
    }

    pub fn min(self) -> i128 {
        if self.signed {
            -(1i128 << (self.bits - 1))
        } else {
            0
        }
    }

    pub fn max(self) -> i128 {
        if self.signed {
            (1i128 << (self.bits - 1)) - 1
        } else {
            (1i128 << self.bits) - 1
        }
    }

    /// `{min, -1, 0, 1, max}` folded into range.
    pub fn boundaries(self) -> [i128; 5] {
        let minus_one = if self.signed { -1 } else { self.max() };
        [self.min(), minus_one, 0, 1, self.max()]
    }

    fn c_name(self) -> String {
        let base = match self.bits {
            8 => "char",
            16 => "short",
            32 => "int",
            _ => "long long",
        };
        if self.signed {
            if self.bits == 8 { "signed char".into() } else { base.into() }
        } else {
            format!("unsigned {base}")
        }
    }
}

/// Encodes a value for the driver, which reads every number as `long long`.
fn wire(v: i128) -> i64 {
    v as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Scalar(IntSpec),
    /// Pointer or array parameter, backed by a fixed-length array.
    Array(IntSpec),
}

impl ParamKind {
    fn width(self) -> usize {
        match self {
            ParamKind::Scalar(_) => 1,
            ParamKind::Array(_) => ARRAY_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub name: String,
    pub ret: Option<IntSpec>,
    pub params: Vec<ParamKind>,
}

const IGNORED_WORDS: &[&str] = &["const", "static", "inline", "register", "extern", "__inline", "__inline__", "restrict", "__restrict"];

fn type_words(text: &str) -> (Vec<&str>, usize) {
    let mut indirections = text.matches('*').count() + text.matches('[').count();
    let words: Vec<&str> = text
        .split(|c: char| c.is_whitespace() || c == '*' || c == '[' || c == ']')
        .filter(|w| !w.is_empty() && !IGNORED_WORDS.contains(w) && !w.chars().all(|c| c.is_ascii_digit()))
        .collect();
    if words.is_empty() {
        indirections = usize::MAX;
    }
    (words, indirections)
}

/// Driver-compatible signature: integer or `void` return, integer scalars
/// and one-level integer pointers/arrays as parameters.
pub fn signature(ast: &Ast) -> Option<Signature> {
    let name = ast.function_name().to_string();
    if name == "main" {
        return None;
    }
    let ret_text = ast.node(ast.root).type_text.clone().unwrap_or_else(|| "int".into());
    let (ret_words, ret_ind) = type_words(&ret_text);
    let ret = match (ret_words.as_slice(), ret_ind) {
        (["void"], 0) => None,
        (w, 0) => Some(IntSpec::parse(w)?),
        _ => return None,
    };
    let mut params = Vec::new();
    for &p in ast.params() {
        let t = ast.node(p).type_text.as_deref()?;
        let (words, ind) = type_words(t);
        if words == ["void"] && ind == 0 {
            continue;
        }
        let spec = IntSpec::parse(&words)?;
        params.push(match ind {
            0 => ParamKind::Scalar(spec),
            1 => ParamKind::Array(spec),
            _ => return None,
        });
    }
    Some(Signature { name, ret, params })
}

/// Generates the driver's `main` for `sig`; the unit text goes before it.
pub fn driver_source(unit_text: &str, sig: &Signature) -> String {
    let width: usize = 1 + sig.params.iter().map(|p| p.width()).sum::<usize>();
    let mut s = String::from(
        "#include <stdio.h>\n#include <stdlib.h>\n#include <unistd.h>\n#include <signal.h>\n#include <sys/types.h>\n#include <sys/wait.h>\n",
    );
    s.push_str(unit_text);
    let _ = write!(
        s,
        "\n\nint main(void) {{\n  long long __spt_v[{width}];\n  for (;;) {{\n    for (int __spt_i = 0; __spt_i < {width}; __spt_i++)\n      if (scanf(\"%lld\", &__spt_v[__spt_i]) != 1) return 0;\n    fflush(stdout);\n    pid_t __spt_pid = fork();\n    if (__spt_pid == 0) {{\n      alarm(2);\n"
    );
    let mut at = 1;
    let mut args = Vec::new();
    for (i, p) in sig.params.iter().enumerate() {
        match *p {
            ParamKind::Scalar(t) => {
                let _ = writeln!(s, "      {} __spt_p{i} = ({}) __spt_v[{at}];", t.c_name(), t.c_name());
                at += 1;
            }
            ParamKind::Array(t) => {
                let _ = writeln!(
                    s,
                    "      {} __spt_p{i}[{ARRAY_LEN}];\n      for (int __spt_k = 0; __spt_k < {ARRAY_LEN}; __spt_k++) __spt_p{i}[__spt_k] = ({}) __spt_v[{at} + __spt_k];",
                    t.c_name(),
                    t.c_name()
                );
                if t.bits == 8 {
                    let _ = writeln!(s, "      __spt_p{i}[{}] = 0;", ARRAY_LEN - 1);
                }
                at += ARRAY_LEN;
            }
        }
        args.push(format!("__spt_p{i}"));
    }
    let call = format!("{}({})", sig.name, args.join(", "));
    match sig.ret {
        Some(t) if t.signed => {
            let _ = writeln!(s, "      printf(\"ret %lld\", (long long) {call});");
        }
        Some(_) => {
            let _ = writeln!(s, "      printf(\"ret %llu\", (unsigned long long) {call});");
        }
        None => {
            let _ = writeln!(s, "      {call};\n      printf(\"ret void\");");
        }
    }
    for (i, p) in sig.params.iter().enumerate() {
        if let ParamKind::Array(t) = p {
            let fmt = if t.signed { "%lld" } else { "%llu" };
            let cast = if t.signed { "long long" } else { "unsigned long long" };
            let _ = writeln!(
                s,
                "      printf(\" a{i}\");\n      for (int __spt_k = 0; __spt_k < {ARRAY_LEN}; __spt_k++) printf(\" {fmt}\", ({cast}) __spt_p{i}[__spt_k]);"
            );
        }
    }
    s.push_str(
        "      printf(\"\\n\");\n      fflush(stdout);\n      _exit(0);\n    }\n    int __spt_st = 0;\n    waitpid(__spt_pid, &__spt_st, 0);\n    if (WIFEXITED(__spt_st)) printf(\"status exit %d\\n\", WEXITSTATUS(__spt_st));\n    else printf(\"status signal %d\\n\", WTERMSIG(__spt_st));\n  }\n}\n",
    );
    s
}

/// One input vector per line: a sequence number, then every scalar and
/// array element. Starts with five all-boundary vectors; later elements are
/// drawn from the boundaries, the small range [-16, 16] or the full range.
pub fn sample_inputs(params: &[ParamKind], count: usize, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let mut row = vec![n as i64];
        for p in params {
            let (spec, width) = match *p {
                ParamKind::Scalar(t) => (t, 1),
                ParamKind::Array(t) => (t, ARRAY_LEN),
            };
            for _ in 0..width {
                let v = if n < 5 {
                    spec.boundaries()[n]
                } else {
                    match rng.gen_range(0..10) {
                        0..=2 => spec.boundaries()[rng.gen_range(0..5)],
                        3..=5 => rng.gen_range(-16i128..=16).clamp(spec.min(), spec.max()),
                        _ => rng.gen_range(spec.min()..=spec.max()),
                    }
                };
                row.push(wire(v));
            }
        }
        out.push(row);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Equivalence {
    Equivalent,
    Divergent { input: Vec<i64>, expected: String, actual: String },
}

/// Splits driver output into one record per input.
fn records(output: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for line in output.lines() {
        cur.push_str(line);
        cur.push('\n');
        if line.starts_with("status ") {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// A compiled driver for one version of the function.
struct Executable {
    _dir: tempfile::TempDir,
    path: std::path::PathBuf,
}

fn build(compiler: &CompilerSpec, text: &str, sig: &Signature) -> Result<Executable, HarnessError> {
    let dir = tempfile::tempdir().map_err(|e| HarnessError::Io(e.to_string()))?;
    let src = dir.path().join("driver.c");
    let exe = dir.path().join("driver");
    std::fs::write(&src, driver_source(text, sig)).map_err(|e| HarnessError::Io(e.to_string()))?;
    let (src_s, exe_s) = (src.to_string_lossy().into_owned(), exe.to_string_lossy().into_owned());
    let mut args = vec!["-O0", "-fwrapv"];
    args.extend(LENIENT_FLAGS);
    args.extend(["-o", &exe_s, &src_s]);
    let out = compiler.run(&args)?;
    if !out.status.success() {
        return Err(HarnessError::CompileFailure(String::from_utf8_lossy(&out.stderr).into_owned()));
    }
    Ok(Executable { _dir: dir, path: exe })
}

fn execute(exe: &Path, input: &str, timeout: Duration) -> Result<String, HarnessError> {
    let mut child = Command::new(exe)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    let mut stdin = child.stdin.take().expect("piped");
    let payload = input.to_string();
    let writer = thread::spawn(move || {
        use std::io::Write;
        let _ = stdin.write_all(payload.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(HarnessError::ExecutionTimeout(timeout));
            }
            Ok(None) => thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(HarnessError::Io(e.to_string())),
        }
    }
    let _ = writer.join();
    let bytes = reader.join().expect("reader thread");
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Reference outputs of one original function, reused across variants.
pub struct DifferentialRunner {
    compiler: CompilerSpec,
    sig: Signature,
    inputs: Vec<Vec<i64>>,
    input_text: String,
    expected: Vec<String>,
    timeout: Duration,
}

impl DifferentialRunner {
    pub fn new(compiler: CompilerSpec, original: &str, count: usize, seed: u64) -> Result<Self, HarnessError> {
        let ast = parse_text(original).map_err(|e| HarnessError::NotDriverCompatible(e.to_string()))?;
        let sig = signature(&ast).ok_or_else(|| HarnessError::NotDriverCompatible(ast.function_name().to_string()))?;
        let inputs = sample_inputs(&sig.params, count, seed);
        let input_text: String = inputs
            .iter()
            .map(|row| row.iter().map(i64::to_string).collect::<Vec<_>>().join(" ") + "\n")
            .collect();
        let timeout = Duration::from_secs(30 + 3 * count as u64);
        let exe = build(&compiler, original, &sig)?;
        let expected = records(&execute(&exe.path, &input_text, timeout)?);
        Ok(DifferentialRunner { compiler, sig, inputs, input_text, expected, timeout })
    }

    pub fn inputs(&self) -> &[Vec<i64>] {
        &self.inputs
    }

    pub fn check(&self, variant: &str) -> Result<Equivalence, HarnessError> {
        let ast = parse_text(variant).map_err(|e| HarnessError::NotDriverCompatible(e.to_string()))?;
        if signature(&ast).as_ref() != Some(&self.sig) {
            return Err(HarnessError::NotDriverCompatible("variant signature differs".into()));
        }
        let exe = build(&self.compiler, variant, &self.sig)?;
        let actual = records(&execute(&exe.path, &self.input_text, self.timeout)?);
        let n = self.expected.len().max(actual.len());
        for i in 0..n {
            let (e, a) = (self.expected.get(i), actual.get(i));
            if e != a {
                return Ok(Equivalence::Divergent {
                    input: self.inputs.get(i).cloned().unwrap_or_default(),
                    expected: e.cloned().unwrap_or_default(),
                    actual: a.cloned().unwrap_or_default(),
                });
            }
        }
        Ok(Equivalence::Equivalent)
    }
}

/// Compiles both versions and compares them on `count` seeded inputs.
pub fn differential_test(
    compiler: &CompilerSpec,
    original: &str,
    variant: &str,
    count: usize,
    seed: u64,
) -> Result<Equivalence, HarnessError> {
    DifferentialRunner::new(compiler.clone(), original, count, seed)?.check(variant)
}
