//! Hand-tallied metric oracles and a random guest-program generator shared
//! by the metrics tests and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;

use faasforge::metrics::analyze;

/// Counts written out by hand for each snippet: distinct and total
/// operators, distinct and total operands, decisions + 1, source lines.
pub struct Expected {
    pub n1: usize,
    pub n2: usize,
    pub big_n1: usize,
    pub big_n2: usize,
    pub cc: u32,
    pub sloc: u32,
}

pub fn oracle_mi(volume: f64, cc: u32, sloc: u32) -> f64 {
    let raw = 171.0 - 5.2 * volume.max(1.0).ln() - 0.23 * f64::from(cc) - 16.2 * f64::from(sloc.max(1)).ln();
    (raw * 100.0 / 171.0).max(0.0)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Compares the analyzer against hand counts and the textbook formulas.
pub fn check(code: &str, runtime: &str, e: &Expected) -> Result<(), String> {
    let r = analyze(code, runtime).map_err(|err| err.to_string())?;
    let h = r.halstead.as_ref().ok_or("no operands")?;
    let counts = (h.n1, h.n2, h.big_n1, h.big_n2);
    if counts != (e.n1, e.n2, e.big_n1, e.big_n2) {
        return Err(format!("counts {counts:?} for {code:?}"));
    }
    if (r.cc, r.sloc) != (e.cc, e.sloc) {
        return Err(format!("cc/sloc {:?} for {code:?}", (r.cc, r.sloc)));
    }
    let length = (e.big_n1 + e.big_n2) as f64;
    let volume = length * ((e.n1 + e.n2) as f64).log2();
    let difficulty = e.n1 as f64 / 2.0 * e.big_n2 as f64 / e.n2 as f64;
    let pairs = [
        ("volume", h.volume, volume),
        ("difficulty", h.difficulty, difficulty),
        ("effort", h.effort, difficulty * volume),
        ("mi", r.mi.unwrap_or(f64::NAN), oracle_mi(volume, e.cc, e.sloc)),
    ];
    for (name, got, want) in pairs {
        if !close(got, want) {
            return Err(format!("{name} {got} vs {want} for {code:?}"));
        }
    }
    Ok(())
}

pub fn snippets() -> Vec<(&'static str, &'static str, Expected)> {
    vec![
        ("def fn(x):\n    y = x + 1\n    return y\n", "python3", Expected { n1: 5, n2: 4, big_n1: 5, big_n2: 6, cc: 1, sloc: 3 }),
        ("def fn(i):\n  if i:\n    return 1\n  return 0", "python3", Expected { n1: 4, n2: 4, big_n1: 5, big_n2: 5, cc: 2, sloc: 4 }),
        (
            "import json\n# parse\ndef fn(s):\n    d = json.loads(s)\n    return d['k'] if d else None\n",
            "python3",
            Expected { n1: 9, n2: 7, big_n1: 10, big_n2: 11, cc: 2, sloc: 4 },
        ),
        ("function fn(a, b) {\n  return a > b ? a : b;\n}\n", "nodejs", Expected { n1: 6, n2: 3, big_n1: 6, big_n2: 7, cc: 2, sloc: 3 }),
        (
            "const f = async (x) => {\n  for (let i = 0; i < x.length && ok; i++) { await g(i); }\n};",
            "nodejs",
            Expected { n1: 13, n2: 7, big_n1: 17, big_n2: 11, cc: 3, sloc: 3 },
        ),
    ]
}

/// cc of the program before and after inserting one `if` near the top.
pub fn if_insertion(stmts: &[Stmt], n: i32) -> [(u32, u32); 2] {
    let before = python_program(stmts);
    let mut after = before.clone();
    after.insert(2, format!("    if data == {n}:\n        data = {n}"));
    let py = (analyze(&before.join("\n"), "python3").unwrap().cc, analyze(&after.join("\n"), "python3").unwrap().cc);
    let before = js_program(stmts);
    let mut after = before.clone();
    after.insert(1, format!("if (data === {n}) {{ data = {n}; }}"));
    let js = (analyze(&before.join("\n"), "nodejs").unwrap().cc, analyze(&after.join("\n"), "nodejs").unwrap().cc);
    [py, js]
}

#[derive(Debug, Clone)]
pub enum Stmt {
    Assign(u8, u8, i32),
    Call(u8, u8),
    If(u8, i32, Vec<Stmt>),
    For(u8, Vec<Stmt>),
    Return(u8),
}

pub fn stmt() -> impl Strategy<Value = Stmt> {
    let leaf = prop_oneof![
        (0u8..6, 0u8..6, -50i32..50).prop_map(|(a, b, n)| Stmt::Assign(a, b, n)),
        (0u8..6, 0u8..6).prop_map(|(a, b)| Stmt::Call(a, b)),
        (0u8..6).prop_map(Stmt::Return),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            (0u8..6, -50i32..50, prop::collection::vec(inner.clone(), 1..4)).prop_map(|(v, n, b)| Stmt::If(v, n, b)),
            (0u8..6, prop::collection::vec(inner, 1..4)).prop_map(|(v, b)| Stmt::For(v, b)),
        ]
    })
}

pub fn render_py(stmts: &[Stmt], depth: usize, out: &mut Vec<String>) {
    let pad = "    ".repeat(depth);
    for s in stmts {
        match s {
            Stmt::Assign(a, b, n) => out.push(format!("{pad}v{a} = v{b} * {n} + len(data)")),
            Stmt::Call(a, b) => out.push(format!("{pad}home.set(\"dev{a}\", \"power\", v{b})")),
            Stmt::Return(a) => out.push(format!("{pad}return v{a}")),
            Stmt::If(v, n, body) => {
                out.push(format!("{pad}if v{v} > {n} and data:"));
                render_py(body, depth + 1, out);
            }
            Stmt::For(v, body) => {
                out.push(format!("{pad}for v{v} in range(3):"));
                render_py(body, depth + 1, out);
            }
        }
    }
}

pub fn python_program(stmts: &[Stmt]) -> Vec<String> {
    let mut lines = vec!["import home".to_string(), "def fn(data):".to_string()];
    render_py(stmts, 1, &mut lines);
    lines
}

pub fn js_program(stmts: &[Stmt]) -> Vec<String> {
    fn render(stmts: &[Stmt], out: &mut Vec<String>) {
        for s in stmts {
            match s {
                Stmt::Assign(a, b, n) => out.push(format!("v{a} = v{b} * {n} + data.length;")),
                Stmt::Call(a, b) => out.push(format!("await home.set('dev{a}', 'power', v{b});")),
                Stmt::Return(a) => out.push(format!("return v{a};")),
                Stmt::If(v, n, body) => {
                    out.push(format!("if (v{v} > {n} && data) {{"));
                    render(body, out);
                    out.push("}".into());
                }
                Stmt::For(v, body) => {
                    out.push(format!("for (let v{v} = 0; v{v} < 3; v{v}++) {{"));
                    render(body, out);
                    out.push("}".into());
                }
            }
        }
    }
    let mut lines = vec!["async function fn(data) {".to_string()];
    render(stmts, &mut lines);
    lines.push("}".into());
    lines
}

pub fn program() -> impl Strategy<Value = Vec<Stmt>> {
    prop::collection::vec(stmt(), 1..10)
}

