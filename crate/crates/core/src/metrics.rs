//! Confusion matrices, one-vs-rest binary metrics and macro averages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::LabelMap;

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.k).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, pred)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= k || p >= k {
            return Err(Error::Invalid(format!("label pair ({t}, {p}) out of range for {k} classes")));
        }
        cm.counts[t * k + p] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BinaryMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        BinaryMetrics {
            tp,
            fp,
            fn_,
            tn,
            acc: ratio(tp + tn, tp + tn + fp + fn_),
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

/// Class `c` against the rest.
pub fn binary_metrics(cm: &ConfusionMatrix, c: usize) -> BinaryMetrics {
    let tp = cm.get(c, c);
    let fp = cm.col_sum(c) - tp;
    let fn_ = cm.row_sum(c) - tp;
    let tn = cm.total() - tp - fp - fn_;
    BinaryMetrics::from_counts(tp, fp, fn_, tn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub count: u64,
}

impl MetricsReport {
    pub fn with_names(mut self, label_map: &LabelMap) -> Self {
        for c in &mut self.per_class {
            c.name = label_map.classes.get(c.class).cloned();
        }
        self
    }
}

/// Overall accuracy plus the unweighted mean F1 over classes that occur
/// among the true labels.
pub fn macro_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| {
            let b = binary_metrics(cm, c);
            ClassMetrics {
                class: c,
                name: None,
                support: cm.row_sum(c),
                precision: b.precision,
                recall: b.recall,
                f1: b.f1,
            }
        })
        .collect();
    let present: Vec<f64> = per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    MetricsReport {
        acc: ratio(cm.trace(), cm.total()),
        per_class,
        macro_f1,
        count: cm.total(),
    }
}
