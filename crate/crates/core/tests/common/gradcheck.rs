//! Central-difference check of the full fused loss against backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transmode::mapping::GridConfig;
use transmode::model::{combined_loss, CnnConfig, FusionState, ModelConfig, Network, TcnConfig};
use transmode::tensor::{Graph, Tensor};

pub fn rel_err(a: f64, n: f64) -> f64 {
    // floor keeps gradients that are zero up to roundoff from dividing by ~0
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn tiny_network() -> Network {
    let cfg = ModelConfig {
        grid: GridConfig { cells_x: 6, cells_y: 5 },
        classes: 3,
        cnn: CnnConfig {
            blocks: 2,
            channels: vec![3, 4],
        },
        tcn: TcnConfig {
            hidden_units: 4,
            levels: 2,
            seq_len: 10,
            dropout: 0.2,
            ..TcnConfig::default()
        },
    };
    Network::new(cfg, 3).unwrap()
}

pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Analytic and central-difference gradients of the fused loss for every
/// parameter value, with dropout active under a fixed mask.
pub fn model_gradients(net: &Network, h: f64) -> Vec<GradEntry> {
    let mut rng = super::rng(8);
    let n = 3;
    let (cx, cy) = (net.config.grid.cells_x, net.config.grid.cells_y);
    let l = net.config.tcn.seq_len;
    let images: Vec<f32> = (0..n * 3 * cx * cy).map(|_| rng.gen_range(0.0..1.0)).collect();
    let seqs: Vec<f32> = (0..n * 3 * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lengths = [l, 7.min(l), 3.min(l)];
    let labels = [2 % net.config.classes, 0, 1];
    let fusion = FusionState { alpha: 0.7, beta: 0.3, ..FusionState::default() };
    // nonzero biases so no layer sits at its initialization symmetry
    let values: Vec<Tensor<f64>> = net
        .params
        .params()
        .iter()
        .map(|p| Tensor::from_fn(p.value.shape(), |i| p.value.data()[i] as f64 + rng.gen_range(-0.1..0.1)))
        .collect();

    let loss_at = |vals: &[Tensor<f64>]| {
        let mut g = Graph::<f64>::new();
        let bound = net.bind_values(&mut g, vals).unwrap();
        let img = net.image_leaf(&mut g, &images).unwrap();
        let seq = net.seq_leaf(&mut g, &seqs).unwrap();
        let c = net.cnn_forward(&mut g, &bound, img).unwrap();
        let mut drop_rng = ChaCha8Rng::seed_from_u64(5);
        let t = net.tcn_forward(&mut g, &bound, seq, &lengths, &mut drop_rng, true).unwrap();
        let (total, _, _) = combined_loss(&mut g, c, t, &labels, &fusion).unwrap();
        (g, bound, total)
    };

    let (g, bound, total) = loss_at(&values);
    let grads = g.backward(total).unwrap();
    let mut out = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let analytic = grads.get(bound.vars()[i]).unwrap();
        for j in 0..v.len() {
            let mut vals = values.clone();
            vals[i].data_mut()[j] += h;
            let (gp, _, lp) = loss_at(&vals);
            vals[i].data_mut()[j] -= 2.0 * h;
            let (gm, _, lm) = loss_at(&vals);
            out.push(GradEntry {
                param: net.params.params()[i].name.clone(),
                index: j,
                analytic: analytic.data()[j],
                numeric: (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * h),
            });
        }
    }
    out
}
