//! Runs a bundled experiment config in-process and prints its JSON report.
//! Usage: `cargo run --example run_config -- configs/sewing.json`

use std::path::PathBuf;

use fk_functor::cli::{emit_report, run, ExperimentConfig};

fn main() -> fk_functor::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/maxcal.json")));
    let outcome = run(&ExperimentConfig::load(&path)?, None)?;
    emit_report(&outcome.report, std::io::stdout().lock())?;
    for a in &outcome.artifacts {
        eprintln!("artifact {} ({} bytes)", a.suffix, a.contents.len());
    }
    Ok(())
}
