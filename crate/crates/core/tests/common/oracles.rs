//! Independent reference implementations shared by the test targets.

use rand::Rng;
use transmode::geo::{haversine_m, initial_bearing_deg};
use transmode::mapping::{GridConfig, CHANNELS};
use transmode::model::{gather_batch, prepare_training_data, training_rngs, CnnConfig, ModelConfig, Network, TcnConfig, TrainSpec};
use transmode::tensor::{AdamState, Graph, ParamStore};
use transmode::Trajectory;

/// Groups points by cell from scratch and recomputes every channel.
pub fn image_oracle(traj: &Trajectory, grid: &GridConfig) -> Vec<f64> {
    let p = traj.points();
    let lats: Vec<f64> = p.iter().map(|q| q.lat).collect();
    let lons: Vec<f64> = p.iter().map(|q| q.lon).collect();
    let fold = |v: &[f64], f: fn(f64, f64) -> f64| v.iter().copied().reduce(f).unwrap();
    let (lat0, lat1) = (fold(&lats, f64::min), fold(&lats, f64::max));
    let (lon0, lon1) = (fold(&lons, f64::min), fold(&lons, f64::max));
    let index = |v: f64, lo: f64, hi: f64, cells: usize| -> usize {
        if hi == lo {
            return 0;
        }
        let width = (hi - lo) / cells as f64;
        let raw = ((v - lo) / width).floor() as i64;
        raw.clamp(0, cells as i64 - 1) as usize
    };
    let cells: Vec<(usize, usize)> = p
        .iter()
        .map(|q| (index(q.lon, lon0, lon1, grid.cells_x), index(q.lat, lat0, lat1, grid.cells_y)))
        .collect();

    let mut out = vec![0.0; grid.cells_x * grid.cells_y * CHANNELS];
    for x in 0..grid.cells_x {
        for y in 0..grid.cells_y {
            let members: Vec<usize> = (0..p.len()).filter(|&i| cells[i] == (x, y)).collect();
            let (Some(&s), Some(&e)) = (members.first(), members.last()) else {
                continue;
            };
            let mut d = 0.0;
            for &i in &members {
                if i + 1 < p.len() {
                    d += haversine_m(p[i].lat, p[i].lon, p[i + 1].lat, p[i + 1].lon);
                }
            }
            let st = p[e].ts - p[s].ts;
            let base = (x * grid.cells_y + y) * CHANNELS;
            out[base] = initial_bearing_deg(p[s].lat, p[s].lon, p[e].lat, p[e].lon);
            out[base + 1] = if st > 0.0 { d / st } else { 0.0 };
            out[base + 2] = st;
        }
    }
    out
}

pub fn tcn_network(seq_len: usize, seed: u64) -> Network {
    let cfg = ModelConfig {
        grid: GridConfig { cells_x: 4, cells_y: 4 },
        classes: 3,
        cnn: CnnConfig {
            blocks: 1,
            channels: vec![2],
        },
        tcn: TcnConfig {
            seq_len,
            ..TcnConfig::default()
        },
    };
    let mut net = Network::new(cfg, seed).unwrap();
    // random biases so every unit is active somewhere
    let mut rng = super::rng(seed + 100);
    for p in net.params.params_mut() {
        if p.name.ends_with(".b") {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    net
}

/// Trains only the image branch with its own graph and optimizer, replaying
/// the data order of `train` for the same seed.
pub fn cnn_only_losses(data: &[Trajectory], spec: &TrainSpec, seed: u64) -> Vec<f64> {
    let (mut data_rng, _) = training_rngs(seed);
    let prepared = prepare_training_data(data, spec, &mut data_rng).unwrap();
    let full = Network::new(spec.model_config(), seed).unwrap();
    let mut cnn_params = ParamStore::new();
    for p in full.params.params().iter().filter(|p| p.name.starts_with("cnn.")) {
        cnn_params.insert(p.clone()).unwrap();
    }
    let mut net = Network { config: full.config.clone(), params: cnn_params };
    let mut adam = AdamState::new(spec.optimizer, &net.params);
    let mut order = prepared.train_idx.clone();
    let mut out = Vec::new();
    for _ in 0..spec.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut data_rng);
        let (mut total, mut batches) = (0.0, 0);
        for chunk in order.chunks(spec.batch_size) {
            let b = gather_batch(&prepared.encoded, &prepared.labels, chunk);
            let mut g = Graph::<f32>::new();
            let bound = net.bind(&mut g);
            let images = net.image_leaf(&mut g, &b.images).unwrap();
            let logits = net.cnn_forward(&mut g, &bound, images).unwrap();
            let loss = g.softmax_cross_entropy(logits, &b.labels).unwrap();
            let grads = g.backward(loss).unwrap();
            net.params.store_grads(&grads, bound.vars());
            adam.step(&mut net.params).unwrap();
            total += g.value(loss).item() as f64;
            batches += 1;
        }
        out.push(total / batches as f64);
    }
    out
}
