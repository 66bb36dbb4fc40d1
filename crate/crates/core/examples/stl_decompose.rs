//! Decompose a trended sine and a jittered sampling cadence, then inject
//! the cadence's seasonal component into a trajectory's timestamps.
//!
//! cargo run --example stl_decompose

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transmode::stl::{inject_period, stl_decompose, InjectionConfig, StlConfig};
use transmode::{GpsPoint, Trajectory};

fn main() -> transmode::Result<()> {
    let period = 12;
    let truth: Vec<f64> = (0..240).map(|v| (2.0 * PI * v as f64 / period as f64).sin()).collect();
    let y: Vec<f64> = truth.iter().enumerate().map(|(v, s)| 0.01 * v as f64 + s).collect();
    let d = stl_decompose(&y, &StlConfig::with_period(period))?;
    let exact = (0..y.len()).all(|v| d.trend[v] + d.seasonal[v] + d.residual[v] == y[v]);
    println!("0.01v + sin(2πv/12): seasonal/sine correlation {:.5}", correlation(&d.seasonal, &truth));
    println!("trend at v=120: {:.4} (true 1.2), identity exact at every point: {exact}", d.trend[120]);
    println!("   v        y    trend  seasonal  residual");
    for v in (0..24).step_by(3) {
        println!("{v:4} {:8.4} {:8.4} {:9.4} {:9.1e}", y[v], d.trend[v], d.seasonal[v], d.residual[v]);
    }

    // a GPS logger that alternates 4 s and 6 s gaps with some jitter
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ts = 1.2e9;
    let points: Vec<GpsPoint> = (0..96)
        .map(|i| {
            let p = GpsPoint::new(i, 39.9 + i as f64 * 1e-5, 116.4, ts);
            ts += if i % 2 == 0 { 4.0 } else { 6.0 } + rng.gen_range(0..2) as f64;
            p
        })
        .collect();
    let traj = Trajectory::new("cadence", points, None)?;
    let cfg = StlConfig::with_period(2);
    let cadence = stl_decompose(&traj.timestamps(), &cfg)?;
    println!("\ncadence seasonal, first cycle: {:.3} {:.3}", cadence.seasonal[0], cadence.seasonal[1]);
    let injected = inject_period(&traj, &cfg, &InjectionConfig { weight: 1.0 })?;
    for (p, q) in traj.points().iter().zip(injected.points()).take(4) {
        println!("ts {:.1} -> {:.3}", p.ts, q.ts);
    }
    Ok(())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
