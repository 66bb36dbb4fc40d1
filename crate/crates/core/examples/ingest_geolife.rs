//! Ingest a GeoLife `Data` tree into the canonical JSON Lines dataset.
//!
//! cargo run --example ingest_geolife -- [data_root] [out.jsonl]
//!
//! Defaults to the small fixture tree shipped with the tests.

use std::path::PathBuf;

use transmode::pipeline::{cmd_ingest, PipelineConfig};

fn main() -> transmode::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/geolife"));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("geolife.jsonl"));

    let cfg = PipelineConfig::default();
    let summary = cmd_ingest(&root, &cfg, &out)?;
    println!("{} users ({} without labels), {} files", summary.users, summary.skipped_users, summary.files);
    println!("{} segments written to {}", summary.segments, out.display());
    for (mode, n) in &summary.per_mode {
        println!("  {mode:<12} {n}");
    }
    println!(
        "dropped: {} unlabeled points, {} points with unmapped modes",
        summary.unlabeled_points, summary.unmapped_points
    );

    for t in transmode::ingest::read_dataset_file(&out, &cfg.label_map)? {
        let mode = t.mode.as_ref().map_or("-", |m| m.name.as_str());
        println!("  {:<28} {:>4} points  {mode}", t.traj_id, t.len());
    }
    Ok(())
}
