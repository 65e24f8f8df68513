//! Label a system, freeze it, then drift one file and watch the frozen
//! check name exactly what changed.
//!
//! Run with: cargo run --example release_flow

use std::fs;
use std::path::Path;

use advm::env_model;
use advm::lint;
use advm::release;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Work on a throwaway copy: this example writes lock files and edits
    // a source.
    let source = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_tree");
    let work = tempfile::tempdir()?;
    copy_tree(&source, work.path())?;

    let layout = env_model::discover(work.path())?;
    let report = lint::lint(&layout)?;
    let label = release::label_system(&layout, &report.diagnostics)?;
    let manifest = release::compute_manifest(&layout)?;
    release::write_release(work.path(), &label, &manifest)?;

    println!("--- frozen label");
    print!("{}", label.to_lock_text());

    // An untouched tree passes the frozen check.
    let (lock, manifest) = release::read_release(work.path())?.expect("just written");
    let drift = release::check_frozen(&layout, &lock, manifest.as_ref())?;
    println!("\nclean tree drifted: {}", !drift.is_clean());

    // One byte of drift flips the environment's sub-label and the check
    // names the file.
    let globals = work.path().join("crc_env/Abstraction_Layer/globals.inc");
    let mut text = fs::read_to_string(&globals)?;
    text.push('\n');
    fs::write(&globals, text)?;

    let layout = env_model::discover(work.path())?;
    let drift = release::check_frozen(&layout, &lock, manifest.as_ref())?;
    println!("\n--- after touching one file");
    print!("{}", drift.render());
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
