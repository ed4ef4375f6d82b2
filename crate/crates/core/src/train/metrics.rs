//! Accuracy and macro one-vs-rest ROC AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epoch: Option<usize>,
    pub split: String,
    pub loss: f64,
    pub acc: f64,
    /// `None` when no class has both positive and negative examples.
    pub auc: Option<f64>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lr: Option<f64>,
}

impl MetricsReport {
    /// Validation-style ordering: accuracy first, AUC breaks ties.
    pub fn better_than(&self, other: &MetricsReport) -> bool {
        if self.acc != other.acc {
            return self.acc > other.acc;
        }
        self.auc.unwrap_or(0.0) > other.auc.unwrap_or(0.0)
    }
}

/// Index of the largest score; the first wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of the `n × k` score matrix whose argmax is the label.
pub fn accuracy(scores: &[f64], k: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() || scores.len() != labels.len() * k {
        return Err(Error::Shape(format!("{} scores for {} labels of {k} classes", scores.len(), labels.len())));
    }
    let hits = scores.chunks(k).zip(labels).filter(|(row, &l)| argmax(row) == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Rank-statistic ROC area; tied scores share their average rank.
/// `None` when either class is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let np = positive.iter().filter(|&&p| p).count() as u64;
    let nn = scores.len() as u64 - np;
    if np == 0 || nn == 0 {
        return None;
    }
    // Twice the rank sum keeps tie averages integral.
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let rank2 = (i + 1 + j) as u64;
        rank2_pos += rank2 * order[i..j].iter().filter(|&&o| positive[o]).count() as u64;
        i = j;
    }
    let u2 = rank2_pos - np * (np + 1);
    Some((u2 as f64 / 2.0) / (np as f64 * nn as f64))
}

/// Mean over classes of one-vs-rest AUC. Classes absent from `labels` (or
/// covering every row) are skipped and returned in the second slot.
pub fn macro_auc(scores: &[f64], k: usize, labels: &[usize]) -> Result<(Option<f64>, Vec<usize>)> {
    if scores.len() != labels.len() * k {
        return Err(Error::Shape(format!("{} scores for {} labels of {k} classes", scores.len(), labels.len())));
    }
    let mut column = vec![0.0; labels.len()];
    let mut positive = vec![false; labels.len()];
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, Vec::new());
    for class in 0..k {
        for (i, &l) in labels.iter().enumerate() {
            column[i] = scores[i * k + class];
            positive[i] = l == class;
        }
        match binary_auc(&column, &positive) {
            Some(a) => {
                sum += a;
                used += 1;
            }
            None => skipped.push(class),
        }
    }
    if !skipped.is_empty() {
        log::warn!("classes {skipped:?} lack positive or negative examples; excluded from macro AUC");
    }
    Ok(((used > 0).then(|| sum / used as f64), skipped))
}
