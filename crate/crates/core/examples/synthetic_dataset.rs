//! Write a labeled walk/car dataset in the canonical JSON Lines format, for
//! trying the command line tool without GeoLife data.
//!
//! cargo run --example synthetic_dataset -- [out.jsonl] [per_class] [points] [seed]

use std::path::PathBuf;

use transmode::ingest::write_dataset_file;
use transmode::synthetic::{two_mode_dataset, SyntheticConfig};
use transmode::LabelMap;

fn main() -> transmode::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("synthetic.jsonl"), PathBuf::from);
    let mut num = |default: u64| args.next().map_or(default, |s| s.parse().expect("numeric argument"));
    let cfg = SyntheticConfig {
        per_class: num(200) as usize,
        points: num(300) as usize,
        seed: num(42),
        ..Default::default()
    };
    let data = two_mode_dataset(&cfg, &LabelMap::default())?;
    write_dataset_file(&out, &data)?;
    println!("{} trajectories of {} points written to {}", data.len(), cfg.points, out.display());
    Ok(())
}
