use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::scalar::Real;

/// One held-out prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Prediction<T: Real> {
    pub score: T,
    pub predicted: bool,
    pub actual: bool,
}

impl<T: Real> Prediction<T> {
    /// Labels the score with the 0.5 threshold (strictly above is positive).
    pub fn from_score(score: T, actual: bool) -> Self {
        Self { score, predicted: score > T::of(0.5), actual }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub auroc: Option<f64>,
    pub confusion: Confusion,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Rank-based AUROC: the chance a random positive outscores a random
/// negative, with ties worth one half. Runs in O(n log n) via midranks.
pub fn roc_auc<T: Real>(scores: &[T], labels: &[bool]) -> Result<f64, LearnerError> {
    if scores.len() != labels.len() {
        return Err(LearnerError::DimensionMismatch { expected: scores.len(), got: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LearnerError::SingleClassAuroc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite score"));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += midrank * pos_in_tie as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Label metrics from the predicted labels and AUROC from the scores.
/// Undefined precision, recall or F1 (zero denominators) are reported as 0.
pub fn compute_metrics<T: Real>(predictions: &[Prediction<T>]) -> Result<MetricsReport, LearnerError> {
    if predictions.is_empty() {
        return Err(LearnerError::Empty);
    }
    let mut c = Confusion::default();
    for p in predictions {
        match (p.predicted, p.actual) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let scores: Vec<T> = predictions.iter().map(|p| p.score).collect();
    let labels: Vec<bool> = predictions.iter().map(|p| p.actual).collect();
    let auroc = match roc_auc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(LearnerError::SingleClassAuroc) => {
            log::warn!("single class among predictions; AUROC undefined");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(MetricsReport { accuracy: ratio(c.tp + c.tn, c.total()), precision, recall, f1, auroc, confusion: c })
}
