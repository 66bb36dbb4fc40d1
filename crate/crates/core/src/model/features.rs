//! Turns trajectories into normalized CNN images and TCN sequences.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mapping::{build_image, ChannelStats, GridConfig, TrajectoryImage};
use crate::stl::{inject_period, InjectionConfig, StlConfig};
use crate::trajectory::Trajectory;

pub const SEQ_CHANNELS: usize = 3;

/// Everything needed to turn a trajectory into model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub grid: GridConfig,
    pub seq_len: usize,
    pub stl: StlConfig,
    pub inject: InjectionConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            grid: GridConfig::default(),
            seq_len: 300,
            stl: StlConfig::default(),
            inject: InjectionConfig::default(),
        }
    }
}

/// Per-point `[Δlon, Δlat, Δts]` channels, `3 × seq_len` row-major, plus the
/// number of real points. The first point's deltas are zero; longer
/// trajectories are truncated and shorter ones zero-padded on the right.
pub fn prepare_tcn_input(traj: &Trajectory, seq_len: usize) -> (Vec<f64>, usize) {
    let pts = traj.points();
    let len = pts.len().min(seq_len);
    let mut out = vec![0.0; SEQ_CHANNELS * seq_len];
    for t in 1..len {
        let (a, b) = (&pts[t - 1], &pts[t]);
        out[t] = b.lon - a.lon;
        out[seq_len + t] = b.lat - a.lat;
        out[2 * seq_len + t] = b.ts - a.ts;
    }
    (out, len)
}

/// Per-channel mean and standard deviation over the real (unpadded) steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqStats {
    pub mean: [f64; SEQ_CHANNELS],
    pub std: [f64; SEQ_CHANNELS],
}

impl SeqStats {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = (&'a [f64], usize)>) -> Self {
        let mut sum = [0.0; SEQ_CHANNELS];
        let mut sq = [0.0; SEQ_CHANNELS];
        let mut count = 0usize;
        let mut stored = Vec::new();
        for (seq, len) in seqs {
            stored.push((seq, len));
            let l = seq.len() / SEQ_CHANNELS;
            for c in 0..SEQ_CHANNELS {
                sum[c] += seq[c * l..c * l + len].iter().sum::<f64>();
            }
            count += len;
        }
        let n = count.max(1) as f64;
        let mean = sum.map(|s| s / n);
        for (seq, len) in stored {
            let l = seq.len() / SEQ_CHANNELS;
            for c in 0..SEQ_CHANNELS {
                sq[c] += seq[c * l..c * l + len].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let std = sq.map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        });
        SeqStats { mean, std }
    }

    /// Standardizes the real steps; padding stays zero.
    pub fn apply(&self, seq: &[f64], len: usize) -> Vec<f32> {
        let l = seq.len() / SEQ_CHANNELS;
        let mut out = vec![0.0f32; seq.len()];
        for c in 0..SEQ_CHANNELS {
            for t in 0..len {
                out[c * l + t] = ((seq[c * l + t] - self.mean[c]) / self.std[c]) as f32;
            }
        }
        out
    }
}

/// Unnormalized features of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub image: TrajectoryImage,
    pub seq: Vec<f64>,
    pub len: usize,
}

pub fn raw_features(traj: &Trajectory, cfg: &FeatureConfig) -> Result<RawFeatures> {
    let image = build_image(traj, &cfg.grid)?;
    let injected = inject_period(traj, &cfg.stl, &cfg.inject)?;
    let (seq, len) = prepare_tcn_input(&injected, cfg.seq_len);
    Ok(RawFeatures { image, seq, len })
}

/// Normalization statistics fitted on a training fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub image: ChannelStats,
    pub seq: SeqStats,
}

impl FeatureStats {
    pub fn fit<'a>(raw: impl IntoIterator<Item = &'a RawFeatures> + Clone) -> Option<Self> {
        let images: Vec<TrajectoryImage> = raw.clone().into_iter().map(|r| r.image.clone()).collect();
        let image = ChannelStats::from_images(&images)?;
        let seq = SeqStats::from_sequences(raw.into_iter().map(|r| (r.seq.as_slice(), r.len)));
        Some(FeatureStats { image, seq })
    }

    pub fn encode(&self, raw: &RawFeatures) -> Encoded {
        Encoded {
            image: self.image.apply(&raw.image).to_chw(),
            seq: self.seq.apply(&raw.seq, raw.len),
            len: raw.len,
        }
    }
}

/// Model-ready input of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// `3 × cells_y × cells_x`
    pub image: Vec<f32>,
    /// `3 × seq_len`
    pub seq: Vec<f32>,
    pub len: usize,
}
