//! Accuracy, macro-F1, ROC-AUC and expected calibration error.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::average_ranks;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::Metric("no samples".into()));
    }
    if a != b {
        return Err(Error::Metric(format!("length mismatch: {a} labels vs {b} predictions")));
    }
    Ok(())
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

fn present_classes(y: &[usize]) -> Vec<usize> {
    let mut c = y.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Per-class F1 averaged over the classes occurring in `y_true`.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    let classes = present_classes(y_true);
    let mut total = 0.0;
    for &c in &classes {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        total += if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    Ok(total / classes.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Result<f64> {
    check_len(positive.len(), scores.len())?;
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("ROC-AUC needs both positive and negative samples".into()));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucAverage {
    /// Unweighted mean of one-vs-rest AUCs.
    #[default]
    Macro,
    /// One-vs-rest AUCs weighted by class support.
    Weighted,
}

/// ROC-AUC from a probability matrix (`n × classes`). With two classes
/// present this is the binary AUC of the higher class id; otherwise the
/// one-vs-rest AUCs of the present classes are averaged.
pub fn roc_auc(y_true: &[usize], probs: ArrayView2<f64>, average: AucAverage) -> Result<f64> {
    check_len(y_true.len(), probs.nrows())?;
    let classes = present_classes(y_true);
    if classes.len() < 2 {
        return Err(Error::Metric("ROC-AUC needs at least two classes".into()));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= probs.ncols()) {
        return Err(Error::Metric(format!("class {c} has no probability column")));
    }
    let one_vs_rest = |c: usize| {
        let pos: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        let scores: Vec<f64> = probs.column(c).to_vec();
        binary_auc(&pos, &scores).map(|a| (a, pos.iter().filter(|&&p| p).count() as f64))
    };
    if classes.len() == 2 {
        return one_vs_rest(classes[1]).map(|(a, _)| a);
    }
    let parts: Vec<(f64, f64)> = classes.iter().map(|&c| one_vs_rest(c)).collect::<Result<_>>()?;
    Ok(match average {
        AucAverage::Macro => parts.iter().map(|(a, _)| a).sum::<f64>() / parts.len() as f64,
        AucAverage::Weighted => {
            parts.iter().map(|(a, w)| a * w).sum::<f64>() / parts.iter().map(|(_, w)| w).sum::<f64>()
        }
    })
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Expected calibration error over `num_bins` equal-width confidence bins.
pub fn ece(y_true: &[usize], probs: ArrayView2<f64>, num_bins: usize) -> Result<f64> {
    check_len(y_true.len(), probs.nrows())?;
    if num_bins == 0 {
        return Err(Error::Metric("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; num_bins];
    let mut correct = vec![0.0; num_bins];
    let mut conf = vec![0.0; num_bins];
    for (row, &y) in probs.rows().into_iter().zip(y_true) {
        let pred = argmax(row.iter().copied());
        let p = row[pred];
        let b = ((p * num_bins as f64).floor() as usize).min(num_bins - 1);
        count[b] += 1;
        conf[b] += p;
        if pred == y {
            correct[b] += 1.0;
        }
    }
    let n = y_true.len() as f64;
    Ok((0..num_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            (k / n) * (correct[b] / k - conf[b] / k).abs()
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `None` when fewer than two classes occur in the labels.
    pub roc_auc: Option<f64>,
    pub ece: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(y_true: &[usize], probs: ArrayView2<f64>, ece_bins: usize, auc: AucAverage) -> Result<Self> {
        let pred: Vec<usize> = probs.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
        let auc = if present_classes(y_true).len() >= 2 { Some(roc_auc(y_true, probs, auc)?) } else { None };
        Ok(Self {
            accuracy: accuracy(y_true, &pred)?,
            macro_f1: macro_f1(y_true, &pred)?,
            roc_auc: auc,
            ece: ece(y_true, probs, ece_bins)?,
            n: y_true.len(),
        })
    }

    /// `(name, value)` pairs in report order.
    pub fn entries(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("accuracy", Some(self.accuracy)),
            ("macro_f1", Some(self.macro_f1)),
            ("roc_auc", self.roc_auc),
            ("ece", Some(self.ece)),
        ]
    }
}
