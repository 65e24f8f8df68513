//! Shared helpers for the integration suites: fixture paths, tree copying,
//! hashing, and two reference implementations used as oracles — a textual
//! splicer that predicts resolver listings for a restricted program shape,
//! and an arbitrary-precision expression evaluator. Both oracles are written
//! from the dialect rules alone and share no code with the library, so
//! agreement with the real implementations is meaningful evidence.

#![allow(dead_code)] // each integration target uses a different subset

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use advm::dialect::{BinOp, Expr};
use advm::env_model::{self, Layer};
use num_bigint::BigInt;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

// --- Fixtures and scratch trees ---------------------------------------------

/// Absolute path of a fixture checked into the crate.
pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn demo_tree() -> PathBuf {
    fixture("demo_tree")
}

pub fn abuse_tree() -> PathBuf {
    fixture("abuse_tree")
}

pub fn variant(name: &str) -> PathBuf {
    fixture("variants").join(name)
}

pub fn golden(name: &str) -> String {
    let path = fixture("goldens").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Recursively copy a fixture tree into a scratch directory, so scenario
/// tests can edit files without touching the checked-in originals.
pub fn copy_tree(src: &Path, dst: &Path) {
    for entry in walkdir::WalkDir::new(src).sort_by_file_name() {
        let entry = entry.expect("walk fixture tree");
        let rel = entry.path().strip_prefix(src).expect("path under src");
        let to = dst.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&to).expect("create directory");
        } else {
            fs::copy(entry.path(), &to)
                .unwrap_or_else(|e| panic!("copy {}: {e}", entry.path().display()));
        }
    }
}

/// Apply one edit to a scenario tree. Panics if the pattern is absent so a
/// porting step can never silently no-op.
pub fn replace_in_file(path: &Path, from: &str, to: &str) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    assert!(
        text.contains(from),
        "pattern {from:?} not found in {}",
        path.display()
    );
    fs::write(path, text.replace(from, to)).expect("write edited file");
}

pub fn sha256_file(path: &Path) -> String {
    let bytes = fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    hex::encode(Sha256::digest(&bytes))
}

/// Digest of every file the layout classifies into `layer`, keyed by
/// root-relative path. Used to assert that a scenario left a layer untouched.
pub fn layer_digests(root: &Path, layer: Layer) -> BTreeMap<PathBuf, String> {
    let layout = env_model::discover(root).expect("discover tree");
    layout
        .classification
        .iter()
        .filter(|(_, l)| **l == layer)
        .map(|(rel, _)| (rel.clone(), sha256_file(&root.join(rel))))
        .collect()
}

// --- Reference splicer ------------------------------------------------------
//
// A deliberately naive second implementation of the preprocessor for the
// program shapes `gen_directive_program` emits. It works on text: directives
// take effect in line order against the table so far, surviving instructions
// are rendered against the finished table. No tokenizer, no AST.

/// The seed table matching `Selection::new("A", "GRM")`.
pub fn reference_seeds() -> Vec<(String, u32)> {
    vec![("DERIV_A".into(), 1), ("TARGET_GRM".into(), 1)]
}

struct Frame {
    /// Was the enclosing region active when this conditional opened?
    parent: bool,
    /// Is the current branch active?
    live: bool,
    /// Has any branch of this conditional run yet?
    taken: bool,
}

/// Predict the resolver listing for a single-file program.
pub fn splice_listing(file: &str, source: &str, seeds: &[(String, u32)]) -> String {
    let mut table: Vec<(String, u32)> = seeds.to_vec();
    let mut stack: Vec<Frame> = Vec::new();
    let mut kept: Vec<(u32, String)> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx as u32 + 1;
        let text = raw.split(';').next().unwrap().trim();
        let active = stack.last().is_none_or(|f| f.parent && f.live);
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix("#define ") {
            if active {
                let (name, body) = rest.trim().split_once(' ').expect("define has a body");
                assert!(
                    lookup(&table, name).is_none(),
                    "generator must keep define names unique, saw {name} twice"
                );
                let value = mini_eval(body.trim(), &table);
                table.push((name.to_string(), value));
            }
        } else if let Some(rest) = text.strip_prefix("#ifndef ") {
            let cond = active && lookup(&table, rest.trim()).is_none();
            stack.push(Frame {
                parent: active,
                live: cond,
                taken: cond,
            });
        } else if let Some(rest) = text.strip_prefix("#ifdef ") {
            let cond = active && lookup(&table, rest.trim()).is_some();
            stack.push(Frame {
                parent: active,
                live: cond,
                taken: cond,
            });
        } else if let Some(rest) = text.strip_prefix("#if ") {
            // Guards in inactive regions are never evaluated.
            let cond = active && guard_eval(rest.trim(), &table);
            stack.push(Frame {
                parent: active,
                live: cond,
                taken: cond,
            });
        } else if text == "#else" {
            let f = stack.last_mut().expect("#else inside a conditional");
            if f.parent && !f.taken {
                f.live = true;
                f.taken = true;
            } else {
                f.live = false;
            }
        } else if text == "#endif" {
            stack.pop().expect("#endif inside a conditional");
        } else if active {
            kept.push((line, text.to_string()));
        }
    }
    assert!(stack.is_empty(), "generator must balance conditionals");

    let mut out = String::new();
    for (line, text) in kept {
        out.push_str(&format!("{file}:{line}\t{}\n", render_instr(&text, &table)));
    }
    out
}

fn lookup(table: &[(String, u32)], name: &str) -> Option<u32> {
    table.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
}

/// Evaluate the generator's expression shapes — a term, `term + term`, or
/// `term << term` — with wraparound done in u64 arithmetic.
fn mini_eval(expr: &str, table: &[(String, u32)]) -> u32 {
    if let Some((l, r)) = expr.split_once(" + ") {
        ((term(l, table) as u64 + term(r, table) as u64) & 0xFFFF_FFFF) as u32
    } else if let Some((l, r)) = expr.split_once(" << ") {
        let shift = term(r, table);
        if shift >= 32 {
            0
        } else {
            (((term(l, table) as u64) << shift) & 0xFFFF_FFFF) as u32
        }
    } else {
        term(expr, table)
    }
}

fn term(text: &str, table: &[(String, u32)]) -> u32 {
    let text = text.trim();
    if let Some(hex) = text.strip_prefix("0x") {
        u32::from_str_radix(hex, 16).expect("hex literal")
    } else if text.starts_with(|c: char| c.is_ascii_digit()) {
        text.parse().expect("decimal literal")
    } else {
        lookup(table, text).unwrap_or_else(|| panic!("undefined name {text}"))
    }
}

/// `#if` guards: `term == term`, or a bare expression tested for non-zero.
fn guard_eval(guard: &str, table: &[(String, u32)]) -> bool {
    if let Some((l, r)) = guard.split_once(" == ") {
        term(l, table) == term(r, table)
    } else {
        mini_eval(guard, table) != 0
    }
}

fn is_register(token: &str) -> bool {
    token.len() >= 2
        && token.len() <= 3
        && token.starts_with('d')
        && token[1..].chars().all(|c| c.is_ascii_digit())
}

fn render_instr(text: &str, table: &[(String, u32)]) -> String {
    match text.split_once(' ') {
        None => text.to_string(),
        Some((op, rest)) => {
            let rendered: Vec<String> = rest
                .split(", ")
                .map(|operand| {
                    let operand = operand.trim();
                    if is_register(operand) {
                        operand.to_string()
                    } else {
                        format!("0x{:X}", mini_eval(operand, table))
                    }
                })
                .collect();
            format!("{op} {}", rendered.join(", "))
        }
    }
}

// --- Program generator ------------------------------------------------------

/// Build one random single-file program within the documented envelope: at
/// most 50 lines, conditional nesting at most three deep, unique define
/// names, bodies and immediates drawn from literal / name / `name + lit` /
/// `name << lit` shapes. Ends with an unconditional `pass` so the program is
/// never empty.
pub fn gen_directive_program(rng: &mut ChaCha8Rng) -> String {
    let mut lines: Vec<String> = Vec::new();
    let planned: Vec<String> = (0..rng.gen_range(3..=8)).map(|i| format!("V{i}")).collect();
    let mut emitted = 0usize;
    let mut noise = 0usize;
    gen_block(rng, 0, &mut lines, &planned, &mut emitted, &mut noise);
    // Names an operand may reference must all exist by the end of the file;
    // flush whatever the random walk did not place.
    while emitted < planned.len() {
        lines.push(define_line(rng, &planned, &mut emitted));
    }
    lines.push("pass".into());
    lines.join("\n") + "\n"
}

fn gen_block(
    rng: &mut ChaCha8Rng,
    depth: u32,
    lines: &mut Vec<String>,
    planned: &[String],
    emitted: &mut usize,
    noise: &mut usize,
) {
    let items = if depth == 0 {
        rng.gen_range(6..=12)
    } else {
        rng.gen_range(1..=4)
    };
    for _ in 0..items {
        if lines.len() >= 40 {
            return; // leave room for the flush and the trailing `pass`
        }
        match rng.gen_range(0..10) {
            0..=2 => lines.push(instr_line(rng, planned)),
            3..=4 if depth == 0 && *emitted < planned.len() => {
                lines.push(define_line(rng, planned, emitted));
            }
            5 if depth > 0 => {
                // A define that only exists when its branch ran. Fresh name,
                // never referenced, so the final table stays predictable.
                let name = format!("C{}", *noise);
                *noise += 1;
                lines.push(format!("#define {name} {}", rng.gen_range(0..7)));
            }
            6..=8 if depth < 3 => {
                lines.push(guard_line(rng, planned, *emitted));
                gen_block(rng, depth + 1, lines, planned, emitted, noise);
                if rng.gen_bool(0.5) {
                    lines.push("#else".into());
                    gen_block(rng, depth + 1, lines, planned, emitted, noise);
                }
                lines.push("#endif".into());
            }
            _ => lines.push(if rng.gen_bool(0.5) {
                String::new()
            } else {
                "; spacer".into()
            }),
        }
    }
}

fn define_line(rng: &mut ChaCha8Rng, planned: &[String], emitted: &mut usize) -> String {
    let name = planned[*emitted].clone();
    // Bodies may reference names already defined: eager evaluation at the
    // define site sees exactly the table so far.
    let body = if *emitted == 0 || rng.gen_bool(0.4) {
        rng.gen_range(0..7).to_string()
    } else {
        let prev = &planned[rng.gen_range(0..*emitted)];
        match rng.gen_range(0..3) {
            0 => prev.clone(),
            1 => format!("{prev} + {}", rng.gen_range(0..5)),
            _ => format!("{prev} << {}", rng.gen_range(0..4)),
        }
    };
    *emitted += 1;
    format!("#define {name} {body}")
}

fn guard_line(rng: &mut ChaCha8Rng, planned: &[String], emitted: usize) -> String {
    match rng.gen_range(0..5) {
        0 => format!("#ifdef {}", ifdef_name(rng, planned)),
        1 => format!("#ifndef {}", ifdef_name(rng, planned)),
        // Value guards reference only names defined by this line; existence
        // guards above may name anything, including names defined later.
        2 | 3 if emitted > 0 => format!(
            "#if {} == {}",
            planned[rng.gen_range(0..emitted)],
            rng.gen_range(0..7)
        ),
        _ => format!("#if {}", rng.gen_range(0..2)),
    }
}

fn ifdef_name(rng: &mut ChaCha8Rng, planned: &[String]) -> String {
    const FIXED: [&str; 4] = ["DERIV_A", "DERIV_B", "TARGET_GRM", "NEVER_SET"];
    if rng.gen_bool(0.5) {
        FIXED[rng.gen_range(0..FIXED.len())].to_string()
    } else {
        planned[rng.gen_range(0..planned.len())].clone()
    }
}

fn instr_line(rng: &mut ChaCha8Rng, planned: &[String]) -> String {
    let reg = format!("d{}", rng.gen_range(0..16));
    let body = match rng.gen_range(0..5) {
        0 => format!("mov {reg}, d{}", rng.gen_range(0..16)),
        1 => format!("mov {reg}, {}", expr_text(rng, planned)),
        2 => format!("shl {reg}, {}", rng.gen_range(0..35)),
        3 => format!("expect {reg}, {}", expr_text(rng, planned)),
        _ => format!("shr {reg}, {}", expr_text(rng, planned)),
    };
    let indent = if rng.gen_bool(0.5) { "    " } else { "" };
    if rng.gen_bool(0.2) {
        format!("{indent}{body} ; note")
    } else {
        format!("{indent}{body}")
    }
}

fn expr_text(rng: &mut ChaCha8Rng, planned: &[String]) -> String {
    let name = planned[rng.gen_range(0..planned.len())].clone();
    match rng.gen_range(0..5) {
        0 => rng.gen_range(0..10).to_string(),
        1 => format!("0x{:X}", rng.gen::<u32>() & 0xFFFF),
        2 => name,
        3 => format!("{name} + {}", rng.gen_range(0..256)),
        _ => format!("{name} << {}", rng.gen_range(0..6)),
    }
}

// --- Reference expression evaluator ------------------------------------------

/// Evaluate with arbitrary-precision integers, reducing modulo 2^32 only
/// where the dialect's number line actually folds: at shift counts, at the
/// operands of `>>`, `&`, `|` and the comparisons, and at the very end.
/// `+ - *`, unary minus and `<<` stay exact because reduction commutes with
/// them, which is what makes this a genuinely different computation from the
/// wrapping-u32 implementation it checks.
pub fn reference_eval_u32(expr: &Expr, defs: &BTreeMap<String, u32>) -> u32 {
    fold_to_u32(&reference_eval(expr, defs))
}

fn reference_eval(expr: &Expr, defs: &BTreeMap<String, u32>) -> BigInt {
    match expr {
        Expr::Literal { value, .. } => BigInt::from(*value),
        Expr::Define(name) => {
            BigInt::from(*defs.get(name).expect("generated names are always defined"))
        }
        Expr::Neg(inner) => -reference_eval(inner, defs),
        Expr::Binary { op, lhs, rhs } => {
            let l = reference_eval(lhs, defs);
            let r = reference_eval(rhs, defs);
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Shl => {
                    let shift = fold_to_u32(&r);
                    if shift >= 32 {
                        BigInt::from(0u32)
                    } else {
                        l << shift
                    }
                }
                BinOp::Shr => {
                    let shift = fold_to_u32(&r);
                    if shift >= 32 {
                        BigInt::from(0u32)
                    } else {
                        // Floor division by a power of two on the folded
                        // value, rather than a machine shift.
                        BigInt::from(fold_to_u32(&l)) / (BigInt::from(1u32) << shift)
                    }
                }
                BinOp::BitOr => BigInt::from(fold_to_u32(&l)) | BigInt::from(fold_to_u32(&r)),
                BinOp::BitAnd => BigInt::from(fold_to_u32(&l)) & BigInt::from(fold_to_u32(&r)),
                BinOp::Eq => BigInt::from(u32::from(fold_to_u32(&l) == fold_to_u32(&r))),
                BinOp::Ne => BigInt::from(u32::from(fold_to_u32(&l) != fold_to_u32(&r))),
                BinOp::Lt => BigInt::from(u32::from(fold_to_u32(&l) < fold_to_u32(&r))),
                BinOp::Gt => BigInt::from(u32::from(fold_to_u32(&l) > fold_to_u32(&r))),
            }
        }
    }
}

/// Reduce an arbitrary integer into `[0, 2^32)` the number-theoretic way.
fn fold_to_u32(x: &BigInt) -> u32 {
    let modulus = BigInt::from(1u64 << 32);
    let folded = ((x % &modulus) + &modulus) % &modulus;
    // `folded` is non-negative and below 2^32, so it fits in one u32 digit.
    let (_, digits) = folded.to_u32_digits();
    digits.first().copied().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splicer_handles_else_and_point_of_use() {
        let source = "#ifdef LATER\nmov d0, 1\n#else\nmov d0, 2\n#endif\n#define LATER 1\n#ifdef LATER\nmov d1, LATER + 1\n#endif\npass\n";
        let listing = splice_listing("gen.asm", source, &reference_seeds());
        assert_eq!(
            listing,
            "gen.asm:4\tmov d0, 0x2\ngen.asm:8\tmov d1, 0x2\ngen.asm:10\tpass\n"
        );
    }

    #[test]
    fn mini_eval_wraps_and_zeroes_wide_shifts() {
        let table = vec![("BIG".to_string(), u32::MAX)];
        assert_eq!(mini_eval("BIG + 2", &table), 1);
        assert_eq!(mini_eval("BIG << 32", &table), 0);
        assert_eq!(mini_eval("1 << 4", &table), 16);
    }

    #[test]
    fn reference_eval_folds_negatives_like_wraparound() {
        let expr = Expr::Neg(Box::new(Expr::Literal {
            value: 1,
            hex: false,
        }));
        assert_eq!(reference_eval_u32(&expr, &BTreeMap::new()), u32::MAX);
    }
}
