//! Lint the abuse corpus: one diagnostic per rule, demonstrating every
//! way a test can bypass the abstraction layer.
//!
//! Run with: cargo run --example lint_tree

use std::path::Path;

use advm::env_model;
use advm::lint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/abuse_tree");
    let layout = env_model::discover(&root)?;
    let report = lint::lint(&layout)?;

    print!("{}", report.render());
    println!();
    println!(
        "{} errors, {} warnings",
        report.error_count(),
        report.warning_count()
    );

    // Each diagnostic carries a stable fingerprint (rule, path, evidence
    // hash) that survives line renumbering — the unit baselines track.
    println!("\nfingerprints:");
    for diagnostic in &report.diagnostics {
        println!("{}", diagnostic.fingerprint());
    }
    Ok(())
}
