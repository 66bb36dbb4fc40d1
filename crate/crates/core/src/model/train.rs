//! Joint training of both branches on the fused loss.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{raw_features, Encoded, FeatureConfig, FeatureStats, RawFeatures};
use super::fusion::{combined_loss, fuse_logits, update_fusion, FusionState};
use super::network::{stream_rng, streams, Network};
use super::{CnnConfig, ModelConfig, TcnConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::metrics::{confusion, macro_metrics};
use crate::tensor::{AdamConfig, AdamState, Graph};
use crate::trajectory::{LabelMap, Trajectory};

/// Everything that determines a training run apart from data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub features: FeatureConfig,
    pub cnn: CnnConfig,
    pub tcn: TcnConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of each class used for training; the rest validates.
    pub split: f64,
    /// Pins `alpha` (and `beta = 1 − alpha`) instead of deriving it from
    /// validation accuracies.
    #[serde(default)]
    pub fixed_alpha: Option<f64>,
    pub label_map: LabelMap,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            features: FeatureConfig::default(),
            cnn: CnnConfig::default(),
            tcn: TcnConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: 64,
            epochs: 20,
            split: 0.8,
            fixed_alpha: None,
            label_map: LabelMap::default(),
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.features.stl.validate()?;
        self.features.inject.validate()?;
        self.optimizer.validate()?;
        self.label_map.validate()?;
        if self.features.seq_len != self.tcn.seq_len {
            return Err(Error::Config(format!(
                "feature sequence length {} differs from tcn seq_len {}",
                self.features.seq_len, self.tcn.seq_len
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.split > 0.0 && self.split <= 1.0) {
            return Err(Error::Config(format!("split must be in (0, 1], got {}", self.split)));
        }
        if let Some(a) = self.fixed_alpha {
            FusionState::fixed(a)?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            grid: self.features.grid,
            classes: self.label_map.num_classes(),
            cnn: self.cnn.clone(),
            tcn: self.tcn.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean fused loss over the epoch's minibatches.
    pub loss: f64,
    pub cnn_loss: f64,
    pub tcn_loss: f64,
    /// CNN-only validation accuracy; absent without a validation fold.
    pub r1: Option<f64>,
    /// TCN-only validation accuracy.
    pub r2: Option<f64>,
    /// Weights used during this epoch.
    pub alpha: f64,
    pub beta: f64,
    pub val_acc: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: Vec<EpochLog>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

/// Features of a labeled dataset split into train and validation folds,
/// normalized with statistics of the training fold.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub raw: Vec<RawFeatures>,
    pub encoded: Vec<Encoded>,
    pub labels: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub stats: FeatureStats,
}

/// Per-class shuffle with `rng`, then the first `round(split · n_c)` samples
/// of every class (at least one) go to training.
pub fn stratified_split<R: Rng + ?Sized>(labels: &[usize], split: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        idx.shuffle(rng);
        let n_train = ((idx.len() as f64 * split).round() as usize).clamp(1, idx.len());
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn labels_of(dataset: &[Trajectory], label_map: &LabelMap) -> Result<Vec<usize>> {
    dataset
        .iter()
        .map(|t| match &t.mode {
            Some(m) if m.index < label_map.num_classes() => Ok(m.index),
            Some(m) => Err(Error::Data(format!("{}: class index {} outside label map", t.traj_id, m.index))),
            None => Err(Error::Data(format!("{}: trajectory has no mode label", t.traj_id))),
        })
        .collect()
}

/// Computes features, splits with `data_rng` and fits normalization on the
/// training fold.
pub fn prepare_training_data<R: Rng + ?Sized>(
    dataset: &[Trajectory],
    spec: &TrainSpec,
    data_rng: &mut R,
) -> Result<PreparedData> {
    let labels = labels_of(dataset, &spec.label_map)?;
    let distinct: std::collections::BTreeSet<_> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::Data(format!(
            "training needs at least two classes, found {}",
            distinct.len()
        )));
    }
    let raw = dataset
        .iter()
        .map(|t| raw_features(t, &spec.features))
        .collect::<Result<Vec<_>>>()?;
    let (train_idx, val_idx) = stratified_split(&labels, spec.split, data_rng);
    let stats = FeatureStats::fit(train_idx.iter().map(|&i| &raw[i])).expect("training fold is non-empty");
    let encoded = raw.iter().map(|r| stats.encode(r)).collect();
    Ok(PreparedData {
        raw,
        encoded,
        labels,
        train_idx,
        val_idx,
        stats,
    })
}

/// Concatenated inputs of the samples at `idx`.
pub struct Batch {
    pub images: Vec<f32>,
    pub seqs: Vec<f32>,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
}

pub fn gather_batch(encoded: &[Encoded], labels: &[usize], idx: &[usize]) -> Batch {
    let mut b = Batch {
        images: Vec::new(),
        seqs: Vec::new(),
        lengths: Vec::with_capacity(idx.len()),
        labels: Vec::with_capacity(idx.len()),
    };
    for &i in idx {
        b.images.extend_from_slice(&encoded[i].image);
        b.seqs.extend_from_slice(&encoded[i].seq);
        b.lengths.push(encoded[i].len);
        b.labels.push(labels.get(i).copied().unwrap_or(0));
    }
    b
}

/// Evaluation-mode logits of both branches, `(cnn, tcn)`, each `N×K`.
pub fn branch_logits(network: &Network, encoded: &[Encoded], idx: &[usize], batch_size: usize) -> Result<(Vec<f32>, Vec<f32>)> {
    let (mut cnn, mut tcn) = (Vec::new(), Vec::new());
    // evaluation never draws from the rng
    let mut no_rng = stream_rng(0, 0);
    for chunk in idx.chunks(batch_size.max(1)) {
        let b = gather_batch(encoded, &[], chunk);
        let mut g = Graph::<f32>::new();
        let bound = network.bind(&mut g);
        let images = network.image_leaf(&mut g, &b.images)?;
        let seqs = network.seq_leaf(&mut g, &b.seqs)?;
        let c = network.cnn_forward(&mut g, &bound, images)?;
        let t = network.tcn_forward(&mut g, &bound, seqs, &b.lengths, &mut no_rng, false)?;
        cnn.extend_from_slice(g.value(c).data());
        tcn.extend_from_slice(g.value(t).data());
    }
    Ok((cnn, tcn))
}

fn argmax_rows(logits: &[f32], k: usize) -> Vec<usize> {
    logits
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Trains both branches on `alpha·L_C + beta·L_T`.
///
/// Weights start at `alpha = beta = 0.5`; after each epoch the CNN-only and
/// TCN-only validation accuracies set the weights for the next epoch. All
/// randomness derives from `seed` through separate streams for data order,
/// initialization and dropout.
pub fn train(dataset: &[Trajectory], spec: &TrainSpec, seed: u64) -> Result<TrainOutcome> {
    spec.validate()?;
    let mut data_rng = stream_rng(seed, streams::DATA);
    let mut dropout_rng = stream_rng(seed, streams::DROPOUT);
    let data = prepare_training_data(dataset, spec, &mut data_rng)?;
    let mut network = Network::new(spec.model_config(), seed)?;
    let mut adam = AdamState::new(spec.optimizer, &network.params);
    let k = network.config.classes;

    let mut fusion = match spec.fixed_alpha {
        Some(a) => FusionState::fixed(a)?,
        None => FusionState::default(),
    };
    let mut log = Vec::with_capacity(spec.epochs);
    let mut order = data.train_idx.clone();
    for epoch in 0..spec.epochs {
        order.shuffle(&mut data_rng);
        let (mut total, mut total_c, mut total_t, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(spec.batch_size) {
            let b = gather_batch(&data.encoded, &data.labels, chunk);
            let mut g = Graph::<f32>::new();
            let bound = network.bind(&mut g);
            let images = network.image_leaf(&mut g, &b.images)?;
            let seqs = network.seq_leaf(&mut g, &b.seqs)?;
            let c = network.cnn_forward(&mut g, &bound, images)?;
            let t = network.tcn_forward(&mut g, &bound, seqs, &b.lengths, &mut dropout_rng, true)?;
            let (loss, lc, lt) = combined_loss(&mut g, c, t, &b.labels, &fusion)?;
            let grads = g.backward(loss)?;
            network.params.store_grads(&grads, bound.vars());
            adam.step(&mut network.params)?;
            total += g.value(loss).item() as f64;
            total_c += g.value(lc).item() as f64;
            total_t += g.value(lt).item() as f64;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let mut entry = EpochLog {
            epoch: epoch + 1,
            loss: total / n,
            cnn_loss: total_c / n,
            tcn_loss: total_t / n,
            r1: None,
            r2: None,
            alpha: fusion.alpha,
            beta: fusion.beta,
            val_acc: None,
            val_macro_f1: None,
        };
        if !data.val_idx.is_empty() {
            let truth: Vec<usize> = data.val_idx.iter().map(|&i| data.labels[i]).collect();
            let (cl, tl) = branch_logits(&network, &data.encoded, &data.val_idx, spec.batch_size)?;
            let r1 = accuracy(&argmax_rows(&cl, k), &truth);
            let r2 = accuracy(&argmax_rows(&tl, k), &truth);
            let fused = fuse_logits(&cl, &tl, k, &fusion);
            let report = macro_metrics(&confusion(&truth, &fused, k)?);
            entry.r1 = Some(r1);
            entry.r2 = Some(r2);
            entry.val_acc = Some(report.acc);
            entry.val_macro_f1 = Some(report.macro_f1);
            if spec.fixed_alpha.is_none() {
                fusion = update_fusion(r1, r2);
            }
        }
        log::debug!(
            "epoch {} loss {:.4} (cnn {:.4}, tcn {:.4}) alpha {:.3} val_acc {:?}",
            entry.epoch,
            entry.loss,
            entry.cnn_loss,
            entry.tcn_loss,
            entry.alpha,
            entry.val_acc
        );
        log.push(entry);
    }
    // gradients are optimizer scratch, not part of the trained model
    network.params.zero_grads();

    Ok(TrainOutcome {
        model: TrainedModel {
            network,
            features: spec.features.clone(),
            stats: data.stats,
            fusion,
            label_map: spec.label_map.clone(),
        },
        log,
        train_idx: data.train_idx,
        val_idx: data.val_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..50).map(|i| if i < 40 { 0 } else { 1 }).collect();
        let mut rng = stream_rng(3, streams::DATA);
        let (train, val) = stratified_split(&labels, 0.8, &mut rng);
        assert_eq!(train.len(), 40);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 0).count(), 8);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 1).count(), 2);
    }

    #[test]
    fn single_class_is_rejected() {
        use crate::trajectory::GpsPoint;
        let map = LabelMap::default();
        let t = Trajectory::new(
            "a",
            vec![GpsPoint::new(0, 1.0, 1.0, 0.0), GpsPoint::new(1, 1.0, 1.1, 1.0)],
            map.lookup("walk"),
        )
        .unwrap();
        let err = train(&[t.clone(), t], &TrainSpec::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }
}
