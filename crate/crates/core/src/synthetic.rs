//! Synthetic two-mode trajectories for experiments and tests.
//!
//! `walk` moves slowly with a wandering heading and irregular sampling;
//! `car` moves fast along a smooth heading, sampled at a cadence that
//! repeats every [`CADENCE_PERIOD`] points.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::trajectory::{GpsPoint, LabelMap, Trajectory};

pub const CADENCE_PERIOD: usize = 24;

const M_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticMode {
    Walk,
    Car,
}

impl SyntheticMode {
    pub fn label(self) -> &'static str {
        match self {
            SyntheticMode::Walk => "walk",
            SyntheticMode::Car => "car",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub per_class: usize,
    pub points: usize,
    /// Start points are drawn uniformly from `center ± spread_deg`.
    pub center: (f64, f64),
    pub spread_deg: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            per_class: 200,
            points: 300,
            center: (39.9, 116.4),
            spread_deg: 0.1,
            seed: 7,
        }
    }
}

/// Sampling interval in seconds before point `v + 1`.
fn interval<R: Rng + ?Sized>(mode: SyntheticMode, v: usize, rng: &mut R) -> f64 {
    match mode {
        SyntheticMode::Walk => rng.gen_range(1.0..6.0),
        SyntheticMode::Car => {
            5.0 + 2.0 * (2.0 * std::f64::consts::PI * v as f64 / CADENCE_PERIOD as f64).sin()
        }
    }
}

pub fn synthetic_trajectory<R: Rng + ?Sized>(
    id: impl Into<String>,
    mode: SyntheticMode,
    start: (f64, f64),
    points: usize,
    label_map: &LabelMap,
    rng: &mut R,
) -> Result<Trajectory> {
    let (speed_mean, speed_sd, turn_sd) = match mode {
        SyntheticMode::Walk => (1.3, 0.4, 40f64.to_radians()),
        SyntheticMode::Car => (12.0, 0.5, 3f64.to_radians()),
    };
    let speed = Normal::<f64>::new(speed_mean, speed_sd).expect("valid sd");
    let turn = Normal::<f64>::new(0.0, turn_sd).expect("valid sd");
    let (mut lat, mut lon) = start;
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut ts = 1_200_000_000.0 + rng.gen_range(0.0..86_400.0f64).floor();
    let mut out = Vec::with_capacity(points);
    for v in 0..points {
        out.push(GpsPoint::new(v, lat, lon, ts));
        let dt = interval(mode, v, rng);
        let d = speed.sample(rng).max(0.2) * dt;
        heading += turn.sample(rng);
        lat += d * heading.cos() / M_PER_DEG_LAT;
        lon += d * heading.sin() / (M_PER_DEG_LAT * lat.to_radians().cos());
        ts += dt;
    }
    Trajectory::new(id, out, label_map.lookup(mode.label()))
}

/// `per_class` walks followed by `per_class` cars, ids `walk-0000`, `car-0000`, ...
pub fn two_mode_dataset(cfg: &SyntheticConfig, label_map: &LabelMap) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(2 * cfg.per_class);
    for mode in [SyntheticMode::Walk, SyntheticMode::Car] {
        for i in 0..cfg.per_class {
            let start = (
                cfg.center.0 + rng.gen_range(-cfg.spread_deg..=cfg.spread_deg),
                cfg.center.1 + rng.gen_range(-cfg.spread_deg..=cfg.spread_deg),
            );
            let id = format!("{}-{i:04}", mode.label());
            out.push(synthetic_trajectory(id, mode, start, cfg.points, label_map, &mut rng)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_labels() {
        let cfg = SyntheticConfig {
            per_class: 3,
            points: 50,
            ..Default::default()
        };
        let map = LabelMap::default();
        let data = two_mode_dataset(&cfg, &map).unwrap();
        assert_eq!(data.len(), 6);
        assert!(data.iter().all(|t| t.len() == 50));
        assert_eq!(data[0].mode.as_ref().unwrap().name, "walk");
        assert_eq!(data[5].mode.as_ref().unwrap().name, "private_car");
        assert_eq!(data, two_mode_dataset(&cfg, &map).unwrap());
    }

    #[test]
    fn car_is_faster_with_periodic_cadence() {
        let map = LabelMap::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let car = synthetic_trajectory("c", SyntheticMode::Car, (39.9, 116.4), 100, &map, &mut rng).unwrap();
        let walk = synthetic_trajectory("w", SyntheticMode::Walk, (39.9, 116.4), 100, &map, &mut rng).unwrap();
        let speed = |t: &Trajectory| {
            let p = t.points();
            let d: f64 = p.windows(2).map(|w| crate::geo::haversine_m(w[0].lat, w[0].lon, w[1].lat, w[1].lon)).sum();
            d / t.duration()
        };
        assert!(speed(&car) > 5.0 * speed(&walk));
        let ts = car.timestamps();
        let dt: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
        assert!((dt[3] - dt[3 + CADENCE_PERIOD]).abs() < 1e-6);
    }
}
