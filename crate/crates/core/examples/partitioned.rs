//! Train one model per concentric ring around a city centre, in parallel,
//! and score the fused predictions.
//!
//! cargo run --release --example partitioned -- [per_class] [epochs]

use transmode::model::TrainSpec;
use transmode::partition::{assign_trajectory, train_partitioned, PartitionOutcome, PartitionSet, PartitionedModel};
use transmode::pipeline::score;
use transmode::synthetic::{two_mode_dataset, SyntheticConfig};
use transmode::LabelMap;

fn main() -> transmode::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let per_class = args.next().unwrap_or(60);
    let epochs = args.next().unwrap_or(12);

    let label_map = LabelMap::default();
    let data = two_mode_dataset(
        &SyntheticConfig {
            per_class,
            points: 120,
            spread_deg: 0.1,
            ..Default::default()
        },
        &label_map,
    )?;
    let rings = PartitionSet::ring_template([39.9, 116.4], [0.03, 0.06, 0.09])?;
    for name in rings.names() {
        let n = data.iter().filter(|t| assign_trajectory(t, &rings) == name).count();
        println!("{name:<12} {n} trajectories");
    }

    let spec = TrainSpec {
        epochs,
        label_map: label_map.clone(),
        ..Default::default()
    };
    let runs = train_partitioned(&data, &rings, &spec, 42, true)?;
    for run in &runs {
        match &run.outcome {
            PartitionOutcome::Trained(o) => {
                let last = o.log.last().expect("at least one epoch");
                let acc = last.val_acc.map_or("-".into(), |a| format!("{a:.3}"));
                println!("{:<12} seed {:#018x}  alpha {:.3}  val acc {acc}", run.name, run.seed, last.alpha);
            }
            PartitionOutcome::Skipped { reason } => println!("{:<12} skipped: {reason}", run.name),
        }
    }

    let fused = PartitionedModel::from_runs(rings, &runs).predict(&data)?;
    let report = score(&data, &fused, &label_map)?;
    println!(
        "fused: {} scored, {} unclassified, acc {:.4}, macro F1 {:.4}",
        report.count, report.unclassified, report.acc, report.macro_f1
    );
    Ok(())
}
