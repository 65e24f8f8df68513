//! Execute one test against two register maps and watch the device mask
//! the same store differently.
//!
//! Run with: cargo run --example simulate

use std::path::Path;

use advm::env_model;
use advm::preprocessor::{Resolver, Selection};
use advm::sim;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_tree");
    let layout = env_model::discover(&root)?;
    let resolver = Resolver::new(&root)?.with_layout(&layout);
    let entry = Path::new("page_ctrl/test_page_range/src/test.asm");

    for derivative in ["A", "B"] {
        let selection = Selection::new(derivative, "GRM");
        let resolution = resolver.resolve(entry, &selection)?;
        let derivative_spec = sim::load_derivative(&root, derivative)?;
        let target_spec = sim::load_target(&root, "GRM")?;

        let (report, trace) = sim::run_traced(&resolution.program, &derivative_spec, &target_spec);
        println!("--- derivative {derivative} (PAGE field masks the store)");
        for step in trace {
            println!("{step}");
        }
        print!("{}", report.render());
        println!();
    }
    Ok(())
}
