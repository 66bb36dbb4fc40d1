#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod gradcheck;
pub mod oracles;
use transmode::mapping::GridConfig;
use transmode::model::{CnnConfig, FeatureConfig, TcnConfig, TrainSpec};
use transmode::stl::{InjectionConfig, StlConfig};
use transmode::synthetic::{two_mode_dataset, SyntheticConfig};
use transmode::{GpsPoint, LabelMap, Trajectory};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Random walk around Beijing with strictly increasing timestamps.
pub fn random_trajectory<R: Rng>(rng: &mut R, id: &str, n: usize) -> Trajectory {
    let (mut lat, mut lon) = (39.9 + rng.gen_range(-0.2..0.2), 116.4 + rng.gen_range(-0.2..0.2));
    let mut ts = 1.2e9 + rng.gen_range(0.0..1e6f64).floor();
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        pts.push(GpsPoint::new(i, lat, lon, ts));
        lat += rng.gen_range(-1e-3..1e-3);
        lon += rng.gen_range(-1e-3..1e-3);
        ts += rng.gen_range(1..30) as f64;
    }
    Trajectory::new(id, pts, None).unwrap()
}

/// Small model and features that keep training tests fast.
pub fn tiny_spec(label_map: LabelMap) -> TrainSpec {
    TrainSpec {
        features: FeatureConfig {
            grid: GridConfig { cells_x: 8, cells_y: 8 },
            seq_len: 48,
            stl: StlConfig::with_period(6),
            inject: InjectionConfig::default(),
        },
        cnn: CnnConfig {
            blocks: 2,
            channels: vec![4, 8],
        },
        tcn: TcnConfig {
            hidden_units: 6,
            levels: 2,
            seq_len: 48,
            ..TcnConfig::default()
        },
        batch_size: 16,
        epochs: 3,
        label_map,
        ..TrainSpec::default()
    }
}

pub fn small_dataset(per_class: usize, points: usize, seed: u64) -> Vec<Trajectory> {
    two_mode_dataset(
        &SyntheticConfig {
            per_class,
            points,
            seed,
            ..Default::default()
        },
        &LabelMap::default(),
    )
    .unwrap()
}
