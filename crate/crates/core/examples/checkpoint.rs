//! Train a small model, save it, reload it and check that predictions
//! survive the round trip.
//!
//! cargo run --release --example checkpoint -- [path]

use std::path::PathBuf;

use transmode::mapping::GridConfig;
use transmode::model::{load_checkpoint, save_checkpoint, train, CnnConfig, TcnConfig, TrainSpec};
use transmode::synthetic::{two_mode_dataset, SyntheticConfig};
use transmode::LabelMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("example.ckpt"));
    let label_map = LabelMap::default();
    let data = two_mode_dataset(
        &SyntheticConfig {
            per_class: 30,
            points: 100,
            ..Default::default()
        },
        &label_map,
    )?;
    let mut spec = TrainSpec {
        epochs: 3,
        batch_size: 16,
        cnn: CnnConfig {
            blocks: 2,
            channels: vec![8, 16],
        },
        tcn: TcnConfig {
            hidden_units: 16,
            levels: 3,
            ..TcnConfig::default()
        },
        label_map,
        ..Default::default()
    };
    spec.features.grid = GridConfig { cells_x: 16, cells_y: 16 };
    spec.features.seq_len = 64;
    spec.tcn.seq_len = 64;

    let model = train(&data, &spec, 1)?.model;
    save_checkpoint(&model, &path)?;
    let size = std::fs::metadata(&path)?.len();
    let back = load_checkpoint(&path)?;
    println!("{} parameter values, {size} bytes at {}", back.network.params.num_values(), path.display());
    println!("fusion alpha {:.4} beta {:.4}", back.fusion.alpha, back.fusion.beta);
    let same = back.predict(&data)? == model.predict(&data)?;
    println!("reloaded predictions identical: {same}");
    Ok(())
}
