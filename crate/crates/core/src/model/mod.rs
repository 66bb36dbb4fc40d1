//! The fused CNN/TCN classifier: architecture, features, training,
//! prediction and checkpoints.

mod checkpoint;
mod config;
mod features;
mod fusion;
mod network;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use config::{CnnConfig, ModelConfig, TcnConfig};
pub use features::{
    prepare_tcn_input, raw_features, Encoded, FeatureConfig, FeatureStats, RawFeatures, SeqStats, SEQ_CHANNELS,
};
pub use fusion::{argmax, combined_loss, fuse_logits, softmax, update_fusion, FusionState};
pub use network::{Bound, Network};
pub use train::{
    branch_logits, gather_batch, labels_of, prepare_training_data, stratified_split, train, Batch, EpochLog,
    PreparedData, TrainOutcome, TrainSpec,
};

use crate::error::{Error, Result};
use crate::trajectory::{LabelMap, Trajectory};

/// Seeds the RNG streams `train` uses: `(data order, dropout)`. Exposed so
/// callers can replay the exact sample order of a run.
pub fn training_rngs(seed: u64) -> (rand_chacha::ChaCha8Rng, rand_chacha::ChaCha8Rng) {
    (
        network::stream_rng(seed, network::streams::DATA),
        network::stream_rng(seed, network::streams::DROPOUT),
    )
}

/// A trained network together with the preprocessing it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub features: FeatureConfig,
    pub stats: FeatureStats,
    pub fusion: FusionState,
    pub label_map: LabelMap,
}

/// Per-trajectory outputs of both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub cnn_logits: Vec<f32>,
    pub tcn_logits: Vec<f32>,
}

impl TrainedModel {
    /// Fails unless the model was trained with the given preprocessing.
    pub fn check_compatible(&self, features: &FeatureConfig, label_map: &LabelMap) -> Result<()> {
        if &self.features != features {
            return Err(Error::Config(format!(
                "checkpoint preprocessing {:?} differs from configured {:?}",
                self.features, features
            )));
        }
        if &self.label_map != label_map {
            return Err(Error::Config("checkpoint label map differs from configured label map".into()));
        }
        Ok(())
    }

    pub fn encode(&self, trajectories: &[Trajectory]) -> Result<Vec<Encoded>> {
        trajectories
            .iter()
            .map(|t| Ok(self.stats.encode(&raw_features(t, &self.features)?)))
            .collect()
    }

    pub fn predict_detailed(&self, trajectories: &[Trajectory]) -> Result<Predictions> {
        let encoded = self.encode(trajectories)?;
        let idx: Vec<usize> = (0..encoded.len()).collect();
        let (cnn_logits, tcn_logits) = branch_logits(&self.network, &encoded, &idx, 64)?;
        let labels = fuse_logits(&cnn_logits, &tcn_logits, self.network.config.classes, &self.fusion);
        Ok(Predictions {
            labels,
            cnn_logits,
            tcn_logits,
        })
    }

    /// Class index per trajectory.
    pub fn predict(&self, trajectories: &[Trajectory]) -> Result<Vec<usize>> {
        Ok(self.predict_detailed(trajectories)?.labels)
    }
}
