//! Hand-derived metric values.

use spt_core::metrics::Halstead;

pub struct Micro {
    pub text: &'static str,
    pub halstead: Halstead,
    pub volume: f64,
    pub cyclomatic: usize,
}

fn h(distinct_operators: usize, distinct_operands: usize, total_operators: usize, total_operands: usize) -> Halstead {
    Halstead { distinct_operators, distinct_operands, total_operators, total_operands }
}

/// Derivations, operators | operands:
///
/// 1. `return` | `f` `0`. n1=1 n2=2 N1=1 N2=2, V = 3 log2 3. No decisions.
/// 2. `return` `+` | `add` `a` `b` `a` `b`. n1=2 n2=3 N1=2 N2=5,
///    V = 7 log2 5. No decisions.
/// 3. `if` `>` `return` `else` `return` | `m` `a` `b` `a` `b` `a` `b`.
///    n1=4 n2=3 N1=5 N2=7, V = 12 log2 7. One `if`: 2.
/// 4. `=` `while` `>` `+=` `--` `return` | `s` `n` `t` `0` `n` `0` `t` `n`
///    `n` `t`. n1=6 n2=4 N1=6 N2=10, V = 16 log2 10. One loop: 2.
/// 5. `switch` `case` `return` `case` `return` `?:` `default` `break`
///    `return` `||` `&&` | `k` `x` `x` `1` `10` `2` `x` `5` `6` `x` `1` `0`.
///    n1=8 n2=8 N1=11 N2=12, V = 23 log2 16 = 92. Two `case`, `?:`, `&&`,
///    `||`: 1 + 5 = 6 (`default` adds nothing).
pub fn micro_programs() -> Vec<Micro> {
    vec![
        Micro { text: "int f(){return 0;}", halstead: h(1, 2, 1, 2), volume: 3.0 * 3f64.log2(), cyclomatic: 1 },
        Micro {
            text: "int add(int a, int b) { return a + b; }",
            halstead: h(2, 3, 2, 5),
            volume: 7.0 * 5f64.log2(),
            cyclomatic: 1,
        },
        Micro {
            text: "int m(int a, int b) { if (a > b) return a; else return b; }",
            halstead: h(4, 3, 5, 7),
            volume: 12.0 * 7f64.log2(),
            cyclomatic: 2,
        },
        Micro {
            text: "int s(int n) { int t = 0; while (n > 0) { t += n; n--; } return t; }",
            halstead: h(6, 4, 6, 10),
            volume: 16.0 * 10f64.log2(),
            cyclomatic: 2,
        },
        Micro {
            text: "int k(int x) { switch (x) { case 1: return 10; case 2: return x ? 5 : 6; default: break; } return x && 1 || 0; }",
            halstead: h(8, 8, 11, 12),
            volume: 92.0,
            cyclomatic: 6,
        },
    ]
}

/// Full-matrix edit distance over bytes.
pub fn reference_distance(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        d[i][0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = (d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1])).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}
