use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Var};

/// Loss weights of the two branches, derived from their accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    /// CNN-branch accuracy the weights were derived from.
    pub r1: Option<f64>,
    /// TCN-branch accuracy.
    pub r2: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Equal weights, used before any accuracy has been measured.
impl Default for FusionState {
    fn default() -> Self {
        FusionState {
            r1: None,
            r2: None,
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl FusionState {
    /// Fixed weights that ignore accuracies, e.g. `alpha = 1` for a CNN-only run.
    pub fn fixed(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("fixed alpha must be in [0, 1], got {alpha}")));
        }
        Ok(FusionState {
            r1: None,
            r2: None,
            alpha,
            beta: 1.0 - alpha,
        })
    }
}

/// `alpha = e^r1 / (e^r1 + e^r2)`, `beta = 1 − alpha`.
pub fn update_fusion(r1: f64, r2: f64) -> FusionState {
    // logistic form of the two-way softmax; exact 0.5 when r1 == r2
    let alpha = 1.0 / (1.0 + (r2 - r1).exp());
    FusionState {
        r1: Some(r1),
        r2: Some(r2),
        alpha,
        beta: 1.0 - alpha,
    }
}

/// Cross-entropy of both branches, combined as `alpha·L_C + beta·L_T`. The
/// weights are constants, so no gradient flows into them. Returns
/// `(combined, cnn_loss, tcn_loss)`.
pub fn combined_loss<S: Element>(
    g: &mut Graph<S>,
    cnn_logits: Var,
    tcn_logits: Var,
    labels: &[usize],
    fusion: &FusionState,
) -> Result<(Var, Var, Var)> {
    let lc = g.softmax_cross_entropy(cnn_logits, labels)?;
    let lt = g.softmax_cross_entropy(tcn_logits, labels)?;
    let wc = g.scale(lc, S::from_f64(fusion.alpha))?;
    let wt = g.scale(lt, S::from_f64(fusion.beta))?;
    let total = g.add(wc, wt)?;
    Ok((total, lc, lt))
}

pub fn softmax(row: &[f32]) -> Vec<f64> {
    crate::tensor::softmax_row(row)
}

/// Index of the largest value; ties go to the smaller index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `argmax(alpha·softmax(cnn) + beta·softmax(tcn))` per row of `N×K` logits.
pub fn fuse_logits(cnn_logits: &[f32], tcn_logits: &[f32], classes: usize, fusion: &FusionState) -> Vec<usize> {
    cnn_logits
        .chunks_exact(classes)
        .zip(tcn_logits.chunks_exact(classes))
        .map(|(c, t)| {
            let (pc, pt) = (softmax(c), softmax(t));
            let mixed: Vec<f64> = pc.iter().zip(&pt).map(|(a, b)| fusion.alpha * a + fusion.beta * b).collect();
            argmax(&mixed)
        })
        .collect()
}
