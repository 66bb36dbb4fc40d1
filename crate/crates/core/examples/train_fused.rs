//! Train the fused CNN/TCN classifier on synthetic walk/car trajectories.
//!
//! cargo run --release --example train_fused -- [per_class] [epochs]

use std::time::Instant;

use transmode::model::{train, TrainSpec};
use transmode::synthetic::{two_mode_dataset, SyntheticConfig};
use transmode::LabelMap;

fn main() -> transmode::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let per_class = args.next().unwrap_or(200);
    let epochs = args.next().unwrap_or(20);

    let label_map = LabelMap::default();
    let data = two_mode_dataset(
        &SyntheticConfig {
            per_class,
            ..Default::default()
        },
        &label_map,
    )?;
    let spec = TrainSpec {
        epochs,
        label_map,
        ..Default::default()
    };

    let start = Instant::now();
    let outcome = train(&data, &spec, 42)?;
    for e in &outcome.log {
        println!(
            "epoch {:2}  loss {:.4}  cnn {:.4}  tcn {:.4}  alpha {:.3}  r1 {:.3}  r2 {:.3}  acc {:.3}  f1 {:.3}",
            e.epoch,
            e.loss,
            e.cnn_loss,
            e.tcn_loss,
            e.alpha,
            e.r1.unwrap_or(f64::NAN),
            e.r2.unwrap_or(f64::NAN),
            e.val_acc.unwrap_or(f64::NAN),
            e.val_macro_f1.unwrap_or(f64::NAN),
        );
    }
    println!(
        "{} train / {} validation trajectories, {:.1} s",
        outcome.train_idx.len(),
        outcome.val_idx.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
