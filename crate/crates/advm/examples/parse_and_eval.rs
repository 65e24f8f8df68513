//! Parse a source snippet, walk its lines, and evaluate the define
//! expressions — the dialect layer on its own, no filesystem involved.
//!
//! Run with: cargo run --example parse_and_eval

use std::collections::BTreeMap;
use std::path::Path;

use advm::dialect::{self, Directive, LineContent};

const SNIPPET: &str = r#"; demo: defines feed expressions feed operands
#define PAGE_SIZE 5
#define PAGE_MASK ((1 << PAGE_SIZE) - 1) << 4

    mov d1, PAGE_MASK
    shl d1, 1
    expect d1, PAGE_MASK << 1
    pass
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let unit = dialect::parse_unit(Path::new("snippet.asm"), SNIPPET)
        .map_err(|errors| errors[0].clone())?;

    // Build a define table by evaluating each #define against what came
    // before it — the same eager order the preprocessor uses.
    let mut defines: BTreeMap<String, u32> = BTreeMap::new();
    for line in &unit.lines {
        match &line.content {
            LineContent::Directive(Directive::Define { name, value, .. }) => {
                let evaluated = dialect::eval_expr(value, &defines)?;
                println!("line {}: {name} = 0x{evaluated:X}", line.number);
                defines.insert(name.clone(), evaluated);
            }
            LineContent::Instr(instr) => {
                println!(
                    "line {}: {} operands={}",
                    line.number,
                    instr.opcode,
                    instr.operands.len()
                );
            }
            _ => {}
        }
    }

    // Arithmetic is u32 with wraparound; shifts of 32 or more clear.
    println!();
    println!(
        "0xFFFFFFFF + 1 wraps to {}",
        dialect::apply_binop(dialect::BinOp::Add, u32::MAX, 1)
    );
    println!(
        "1 << 40 clears to {}",
        dialect::apply_binop(dialect::BinOp::Shl, 1, 40)
    );
    Ok(())
}
