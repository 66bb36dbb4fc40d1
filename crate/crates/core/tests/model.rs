mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use common::oracles::{cnn_only_losses, tcn_network};
use transmode::mapping::GridConfig;
use transmode::model::{
    combined_loss, decode_checkpoint, encode_checkpoint, train,
    update_fusion, CnnConfig, FusionState, ModelConfig, Network, TcnConfig, TrainSpec,
};
use transmode::tensor::{AdamConfig, AdamState, Graph, ParamStore, Parameter, Tensor};
use transmode::{Error, LabelMap};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Direct cross-correlation loops with zero padding.
fn conv2d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, k) = (ws[0], ws[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Vec::new();
    for ni in 0..n {
        for oi in 0..o {
            for yi in 0..oh {
                for xi in 0..ow {
                    let mut acc = b.data()[oi];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (yi * stride + ky) as isize - pad as isize;
                                let ix = (xi * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((ni * c + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((oi * c + ci) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// `y[t] = b + Σ_j w[j] · x[t − j·d]`, zero before the sequence start.
fn conv1d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, d: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, c, l) = (xs[0], xs[1], xs[2]);
    let (o, k) = (ws[0], ws[2]);
    let mut out = Vec::new();
    for ni in 0..n {
        for oi in 0..o {
            for t in 0..l {
                let mut acc = b.data()[oi];
                for ci in 0..c {
                    for j in 0..k {
                        let back = j * d;
                        if back <= t {
                            acc += w.data()[(oi * c + ci) * k + j] * x.data()[(ni * c + ci) * l + t - back];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn close(a: &[f64], b: &[f64], what: &str) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() < 1e-12 * x.abs().max(1.0), "{what} [{i}]: {x} vs {y}");
    }
}

#[test]
fn conv_and_dense_match_loops() {
    let mut rng = common::rng(1);
    for (k, stride, pad, h, w) in [(3, 1, 1, 7, 5), (3, 2, 1, 8, 8), (1, 2, 0, 6, 5), (3, 1, 0, 4, 9)] {
        let x = rand_tensor(&mut rng, &[2, 3, h, w]);
        let wt = rand_tensor(&mut rng, &[4, 3, k, k]);
        let b = rand_tensor(&mut rng, &[4]);
        let mut g = Graph::<f64>::new();
        let (xv, wv, bv) = (g.leaf(x.clone()), g.leaf(wt.clone()), g.leaf(b.clone()));
        let y = g.conv2d(xv, wv, bv, stride, pad).unwrap();
        close(g.value(y).data(), &conv2d_oracle(&x, &wt, &b, stride, pad), &format!("conv2d k{k} s{stride} p{pad}"));
    }
    for (k, d) in [(3, 1), (3, 2), (3, 8), (2, 5)] {
        let x = rand_tensor(&mut rng, &[2, 3, 20]);
        let wt = rand_tensor(&mut rng, &[5, 3, k]);
        let b = rand_tensor(&mut rng, &[5]);
        let mut g = Graph::<f64>::new();
        let (xv, wv, bv) = (g.leaf(x.clone()), g.leaf(wt.clone()), g.leaf(b.clone()));
        let y = g.conv1d_causal(xv, wv, bv, d).unwrap();
        close(g.value(y).data(), &conv1d_oracle(&x, &wt, &b, d), &format!("conv1d k{k} d{d}"));
    }
    let x = rand_tensor(&mut rng, &[4, 6]);
    let wt = rand_tensor(&mut rng, &[6, 3]);
    let b = rand_tensor(&mut rng, &[3]);
    let mut g = Graph::<f64>::new();
    let (xv, wv, bv) = (g.leaf(x.clone()), g.leaf(wt.clone()), g.leaf(b.clone()));
    let y = g.dense(xv, wv, bv).unwrap();
    let mut want = Vec::new();
    for n in 0..4 {
        for o in 0..3 {
            want.push(b.data()[o] + (0..6).map(|i| x.data()[n * 6 + i] * wt.data()[i * 3 + o]).sum::<f64>());
        }
    }
    close(g.value(y).data(), &want, "dense");
}

#[test]
fn conv_hand_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(&[1, 1, 5, 5], 1.0));
    let w = g.leaf(Tensor::full(&[1, 1, 3, 3], 1.0));
    let b = g.leaf(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 3, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 9.0));

    let mut impulse = Tensor::zeros(&[1, 1, 20]);
    impulse.data_mut()[5] = 1.0;
    let x = g.leaf(impulse);
    let w = g.leaf(Tensor::full(&[1, 1, 3], 1.0));
    let b = g.leaf(Tensor::zeros(&[1]));
    let y = g.conv1d_causal(x, w, b, 4).unwrap();
    let hot: Vec<usize> = (0..20).filter(|&t| g.value(y).data()[t] != 0.0).collect();
    assert_eq!(hot, vec![5, 9, 13]);
}

/// Logits read out at every position `t` of a single sequence.
fn tcn_outputs(net: &Network, seq: &[f32]) -> Vec<Vec<f64>> {
    let l = net.config.tcn.seq_len;
    let mut no_rng = common::rng(0);
    (1..=l)
        .map(|len| {
            let mut g = Graph::<f64>::new();
            let bound = net.bind(&mut g);
            let s = net.seq_leaf(&mut g, seq).unwrap();
            let y = net.tcn_forward(&mut g, &bound, s, &[len], &mut no_rng, false).unwrap();
            g.value(y).data().to_vec()
        })
        .collect()
}

#[test]
fn tcn_is_causal() {
    let net = tcn_network(40, 3);
    let mut rng = common::rng(4);
    let seq: Vec<f32> = (0..3 * 40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let base = tcn_outputs(&net, &seq);
    for tp in [0, 7, 20, 39] {
        let mut bumped = seq.clone();
        for c in 0..3 {
            bumped[c * 40 + tp] += 3.0;
        }
        let out = tcn_outputs(&net, &bumped);
        for t in 0..40 {
            if t < tp {
                assert_eq!(out[t], base[t], "output {t} moved after perturbing {tp}");
            }
        }
        assert_ne!(out[tp], base[tp]);
    }
}

#[test]
fn receptive_field_is_61_by_tracing() {
    let l = 100;
    assert_eq!(TcnConfig::default().receptive_field(), 61);
    let mut deps = vec![false; l];
    for seed in 0..3 {
        let net = tcn_network(l, seed);
        let mut rng = common::rng(10 + seed);
        let seq: Vec<f32> = (0..3 * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let read = |s: &[f32]| {
            let mut g = Graph::<f64>::new();
            let bound = net.bind(&mut g);
            let x = net.seq_leaf(&mut g, s).unwrap();
            let y = net.tcn_forward(&mut g, &bound, x, &[l], &mut common::rng(0), false).unwrap();
            g.value(y).data().to_vec()
        };
        let base = read(&seq);
        for (t, dep) in deps.iter_mut().enumerate() {
            for delta in [2.0, -2.0] {
                let mut s = seq.clone();
                for c in 0..3 {
                    s[c * l + t] += delta;
                }
                if read(&s) != base {
                    *dep = true;
                }
            }
        }
    }
    let first = deps.iter().position(|&d| d).unwrap();
    assert!(deps[first..].iter().all(|&d| d), "dependency set has gaps");
    assert_eq!(l - first, 61);
}

#[test]
fn padding_does_not_reach_the_readout() {
    let net = tcn_network(30, 5);
    let mut rng = common::rng(6);
    let len = 17;
    let mut seq = vec![0.0f32; 3 * 30];
    for c in 0..3 {
        for t in 0..len {
            seq[c * 30 + t] = rng.gen_range(-1.0..1.0);
        }
    }
    let mut junk = seq.clone();
    for c in 0..3 {
        for t in len..30 {
            junk[c * 30 + t] = 1e3;
        }
    }
    assert_eq!(tcn_outputs(&net, &seq)[len - 1], tcn_outputs(&net, &junk)[len - 1]);
}

fn small_model(seed: u64) -> Network {
    let cfg = ModelConfig {
        grid: GridConfig { cells_x: 8, cells_y: 6 },
        classes: 4,
        cnn: CnnConfig {
            blocks: 2,
            channels: vec![4, 6],
        },
        tcn: TcnConfig {
            hidden_units: 5,
            levels: 2,
            seq_len: 12,
            ..TcnConfig::default()
        },
    };
    Network::new(cfg, seed).unwrap()
}

#[test]
fn zero_image_yields_head_bias() {
    let mut net = small_model(1);
    let bias = [0.5f32, -1.25, 2.0, 0.0];
    net.params.get_mut("cnn.head.b").unwrap().value = Tensor::new(&[4], bias.to_vec()).unwrap();
    let mut g = Graph::<f32>::new();
    let bound = net.bind(&mut g);
    let img = net.image_leaf(&mut g, &vec![0.0; 2 * 3 * 48]).unwrap();
    let y = net.cnn_forward(&mut g, &bound, img).unwrap();
    assert_eq!(g.value(y).data(), &[bias, bias].concat()[..]);
}

#[test]
fn identical_samples_get_identical_logits() {
    let net = small_model(2);
    let mut rng = common::rng(3);
    let img: Vec<f32> = (0..3 * 48).map(|_| rng.gen_range(0.0..1.0)).collect();
    let seq: Vec<f32> = (0..3 * 12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut g = Graph::<f32>::new();
    let bound = net.bind(&mut g);
    let i = net.image_leaf(&mut g, &[img.clone(), img.clone(), img].concat()).unwrap();
    let s = net.seq_leaf(&mut g, &[seq.clone(), seq.clone(), seq].concat()).unwrap();
    let c = net.cnn_forward(&mut g, &bound, i).unwrap();
    let t = net.tcn_forward(&mut g, &bound, s, &[12, 12, 12], &mut common::rng(0), false).unwrap();
    for v in [c, t] {
        let rows: Vec<&[f32]> = g.value(v).data().chunks(4).collect();
        assert!(rows[0] == rows[1] && rows[1] == rows[2]);
    }
}

#[test]
fn one_adam_step_lowers_the_loss() {
    let mut net = small_model(4);
    let mut rng = common::rng(5);
    let img: Vec<f32> = (0..6 * 3 * 48).map(|_| rng.gen_range(0.0..1.0)).collect();
    let seq: Vec<f32> = (0..6 * 3 * 12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = [0, 1, 2, 3, 1, 0];
    let fusion = FusionState::default();
    let loss_of = |net: &Network| {
        let mut g = Graph::<f32>::new();
        let bound = net.bind(&mut g);
        let i = net.image_leaf(&mut g, &img).unwrap();
        let s = net.seq_leaf(&mut g, &seq).unwrap();
        let c = net.cnn_forward(&mut g, &bound, i).unwrap();
        let t = net.tcn_forward(&mut g, &bound, s, &[12; 6], &mut common::rng(0), false).unwrap();
        let (l, _, _) = combined_loss(&mut g, c, t, &labels, &fusion).unwrap();
        let grads = g.backward(l).unwrap();
        (g.value(l).item(), grads, bound)
    };
    let (before, grads, bound) = loss_of(&net);
    net.params.store_grads(&grads, bound.vars());
    let mut adam = AdamState::new(AdamConfig { lr: 1e-3, ..AdamConfig::default() }, &net.params);
    adam.step(&mut net.params).unwrap();
    let (after, _, _) = loss_of(&net);
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn adam_first_step_closed_form() {
    let mut store = ParamStore::new();
    let value = vec![0.5f32, -1.0, 2.0, 0.0, 3.0];
    let grad = vec![0.2f32, -4.0, 1e-3, 0.0, -0.5];
    let mut p = Parameter::new("w", Tensor::new(&[5], value.clone()).unwrap());
    p.grad = Tensor::new(&[5], grad.clone()).unwrap();
    store.insert(p).unwrap();
    let cfg = AdamConfig::default();
    let mut adam = AdamState::new(cfg, &store);
    adam.step(&mut store).unwrap();
    assert_eq!(adam.step_count, 1);
    for i in 0..5 {
        // bias-corrected moments equal g and g², so the step is lr·g/(|g|+eps)
        let g = grad[i] as f64;
        let want = value[i] as f64 - cfg.lr * g / (g.abs() + cfg.eps);
        assert!((store.params()[0].value.data()[i] as f64 - want).abs() < 1e-6);
    }
    // a zero gradient leaves its entry untouched
    assert_eq!(store.params()[0].value.data()[3], 0.0);
}

proptest! {
    #[test]
    fn fusion_weights_sum_to_one(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
        let f = update_fusion(r1, r2);
        prop_assert!((f.alpha + f.beta - 1.0).abs() <= f64::EPSILON);
        prop_assert!(f.alpha > 0.0 && f.beta > 0.0);
        prop_assert_eq!(f.alpha > 0.5, r1 > r2);
        let want = r1.exp() / (r1.exp() + r2.exp());
        prop_assert!((f.alpha - want).abs() < 1e-12);
    }

    #[test]
    fn equal_accuracies_split_evenly(r in 0.0f64..=1.0) {
        let f = update_fusion(r, r);
        prop_assert!((f.alpha - 0.5).abs() < 1e-12 && (f.beta - 0.5).abs() < 1e-12);
    }
}

#[test]
fn fixed_alpha_bounds() {
    assert!(FusionState::fixed(1.0).is_ok());
    assert!(matches!(FusionState::fixed(1.5), Err(Error::Config(_))));
}

fn tiny_spec() -> TrainSpec {
    common::tiny_spec(LabelMap::default())
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let data = common::small_dataset(12, 60, 3);
    let spec = TrainSpec { epochs: 1, ..tiny_spec() };
    let model = train(&data, &spec, 9).unwrap().model;
    let bytes = encode_checkpoint(&model).unwrap();
    assert_eq!(&bytes[..4], b"ESTM");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    assert_eq!(back.predict(&data).unwrap(), model.predict(&data).unwrap());

    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Checkpoint(_))));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(decode_checkpoint(&trailing).is_err());

    let mut other = spec.features.clone();
    other.grid = GridConfig { cells_x: 9, cells_y: 8 };
    assert!(matches!(back.check_compatible(&other, &spec.label_map), Err(Error::Config(_))));
    assert!(back.check_compatible(&spec.features, &spec.label_map).is_ok());
}

#[test]
fn training_is_deterministic() {
    let data = common::small_dataset(10, 60, 4);
    let spec = TrainSpec { epochs: 2, ..tiny_spec() };
    let a = train(&data, &spec, 21).unwrap();
    let b = train(&data, &spec, 21).unwrap();
    assert_eq!(encode_checkpoint(&a.model).unwrap(), encode_checkpoint(&b.model).unwrap());
    assert_eq!(a.log, b.log);
    let c = train(&data, &spec, 22).unwrap();
    assert_ne!(encode_checkpoint(&a.model).unwrap(), encode_checkpoint(&c.model).unwrap());
    for e in &a.log {
        assert_eq!(e.alpha + e.beta, 1.0);
    }
    assert_eq!(a.log.len(), 2);
}

#[test]
fn alpha_one_reproduces_cnn_only_training() {
    let data = common::small_dataset(16, 60, 5);
    let spec = TrainSpec {
        epochs: 3,
        fixed_alpha: Some(1.0),
        ..tiny_spec()
    };
    let fused = train(&data, &spec, 17).unwrap();
    let losses: Vec<f64> = fused.log.iter().map(|e| e.loss).collect();
    let replica = cnn_only_losses(&data, &spec, 17);
    assert_eq!(losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), replica.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(fused.log.iter().all(|e| e.alpha == 1.0 && e.beta == 0.0));
    let cnn_logged: Vec<f64> = fused.log.iter().map(|e| e.cnn_loss).collect();
    assert_eq!(cnn_logged, replica);
    // the sequence branch never moves
    let init = Network::new(spec.model_config(), 17).unwrap();
    for p in init.params.params().iter().filter(|p| p.name.starts_with("tcn.")) {
        assert_eq!(fused.model.network.params.get(&p.name).unwrap().value, p.value);
    }
}

#[test]
fn initialization_follows_the_seed() {
    let cfg = small_model(1).config;
    assert_eq!(Network::new(cfg.clone(), 1).unwrap(), Network::new(cfg.clone(), 1).unwrap());
    assert_ne!(Network::new(cfg.clone(), 1).unwrap().params, Network::new(cfg, 2).unwrap().params);
}
