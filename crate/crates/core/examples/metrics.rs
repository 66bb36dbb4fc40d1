//! Confusion matrix, one-vs-rest metrics and macro F1 for a small
//! three-class example.
//!
//! cargo run --example metrics

use transmode::metrics::{binary_metrics, confusion, macro_metrics, BinaryMetrics};

fn main() -> transmode::Result<()> {
    let b = BinaryMetrics::from_counts(8, 2, 1, 9);
    println!("TP=8 FP=2 FN=1 TN=9: acc {} precision {} recall {:.4} f1 {:.4}", b.acc, b.precision, b.recall, b.f1);

    let classes = ["walk", "bike", "car"];
    let truth = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2];
    let pred = [0, 0, 1, 0, 1, 1, 0, 2, 2, 2, 1, 2];
    let cm = confusion(&truth, &pred, classes.len())?;
    println!("\ntrue \\ pred  {}", classes.join("  "));
    for (name, row) in classes.iter().zip(cm.rows()) {
        println!("{name:>11}  {row:?}");
    }
    for (c, name) in classes.iter().enumerate() {
        let m = binary_metrics(&cm, c);
        println!("{name:<5} precision {:.3} recall {:.3} f1 {:.3}", m.precision, m.recall, m.f1);
    }
    let report = macro_metrics(&cm);
    println!("accuracy {:.4}, macro F1 {:.4}", report.acc, report.macro_f1);
    Ok(())
}
