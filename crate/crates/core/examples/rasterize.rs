//! Rasterize a synthetic walk and car trajectory into three-channel images
//! (bearing, speed, stay time) and write them as PPM files.
//!
//! cargo run --example rasterize -- [out_dir] [cells]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use transmode::mapping::{build_image, normalize_channels, GridConfig};
use transmode::synthetic::{synthetic_trajectory, SyntheticMode};
use transmode::LabelMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out_dir = args.next().map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let cells: usize = args.next().map_or(40, |s| s.parse().expect("cells must be an integer"));
    let grid = GridConfig { cells_x: cells, cells_y: cells };
    let label_map = LabelMap::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut images = Vec::new();
    for (name, mode) in [("walk", SyntheticMode::Walk), ("car", SyntheticMode::Car)] {
        let t = synthetic_trajectory(name, mode, (39.9, 116.4), 300, &label_map, &mut rng)?;
        let img = build_image(&t, &grid)?;
        let touched = img.as_slice().chunks(3).filter(|c| c.iter().any(|&v| v != 0.0)).count();
        let stay: f64 = img.as_slice().chunks(3).map(|c| c[2]).sum();
        println!("{name}: {} points, {touched} nonzero cells, summed stay time {stay:.0} s", t.len());
        images.push((name, img));
    }

    // shared scaling so the two images are comparable
    let raw: Vec<_> = images.iter().map(|(_, img)| img.clone()).collect();
    let (scaled, stats) = normalize_channels(&raw, None)?;
    println!("channel min {:?}\nchannel max {:?}", stats.min, stats.max);
    for ((name, _), img) in images.iter().zip(&scaled) {
        let path = out_dir.join(format!("{name}.ppm"));
        img.write_ppm(BufWriter::new(File::create(&path)?))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
