//! The workflow the layering exists for: port a suite to a new derivative,
//! absorb a specification change, absorb a global-function change — all
//! without touching one test.
//!
//! Run with: cargo run --example porting_scenarios

use std::fs;
use std::path::Path;

use advm::env_model;
use advm::preprocessor::Selection;
use advm::regression::{self, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let work = tempfile::tempdir()?;
    copy_tree(&fixtures.join("demo_tree"), work.path())?;

    // Scenario 1: same tree, different derivative — nothing to edit at all.
    println!("--- suite under derivative A, then B (same bytes)");
    run_suite(work.path(), "A")?;
    run_suite(work.path(), "B")?;

    // Scenario 2: the shared checksum routine swapped its input registers.
    // Unported, the self-checking test catches the mismatch ...
    println!("--- global routine swapped its inputs; tests untouched");
    fs::copy(
        fixtures.join("variants/crc_swapped.asm"),
        work.path().join("global_lib/crc.asm"),
    )?;
    run_suite(work.path(), "A")?;

    // ... and one wrapper edit in the abstraction layer re-ports the
    // whole environment.
    println!("--- wrapper remapped in base_functions.asm; tests untouched");
    fs::copy(
        fixtures.join("variants/base_functions_crc_remapped.asm"),
        work.path()
            .join("crc_env/Abstraction_Layer/base_functions.asm"),
    )?;
    run_suite(work.path(), "A")?;
    Ok(())
}

fn run_suite(root: &Path, derivative: &str) -> Result<(), Box<dyn std::error::Error>> {
    let layout = env_model::discover(root)?;
    let cases = regression::plan(&layout, None)?;
    let config = RunConfig {
        selection: Selection::new(derivative, "GRM"),
        parallelism: 1,
        frozen: false,
    };
    let summary = regression::execute(&layout, &cases, &config)?;
    print!("{}", summary.render_human());
    println!();
    Ok(())
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    for entry in walkdir::WalkDir::new(from) {
        let entry = entry?;
        let rel = entry.path().strip_prefix(from).expect("walked under from");
        let dest = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest)?;
        } else {
            fs::copy(entry.path(), &dest)?;
        }
    }
    Ok(())
}
