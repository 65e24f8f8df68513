//! Run the whole demo suite under one selection, in parallel, and print
//! the per-cell verdicts.
//!
//! Run with: cargo run --example regression_flow

use std::path::Path;

use advm::env_model;
use advm::preprocessor::Selection;
use advm::regression::{self, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_tree");
    let layout = env_model::discover(&root)?;
    let cases = regression::plan(&layout, None)?;

    let config = RunConfig {
        selection: Selection::new("A", "GRM"),
        parallelism: 0, // let the pool size itself
        frozen: false,
    };
    let summary = regression::execute(&layout, &cases, &config)?;
    print!("{}", summary.render_human());

    println!("\nmachine form (stable across runs):");
    print!("{}", summary.records_text());
    Ok(())
}
