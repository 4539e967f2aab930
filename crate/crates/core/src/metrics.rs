//! Goodness-of-fit statistics for probabilistic binary classifiers: Efron's
//! pseudo-R², ROC AUC, precision-recall AUC, balanced accuracy and F1.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// The five statistics plus context. `auc` and `pr_auc` are `None` when the
/// labels contain a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: f64,
    pub auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub bacc: f64,
    pub f1: f64,
    pub n: usize,
    pub positive_rate: f64,
    pub threshold: f64,
    /// Set when every observation falls on one side of the threshold.
    pub degenerate: Option<String>,
}

/// Evaluates `scores` against `labels`; predictions at or above `threshold`
/// count as positive.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty sample".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score at position {i}")));
    }
    let n = scores.len();
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = n - positives;

    let (auc, pr_auc) = if positives == 0 || negatives == 0 {
        (None, None)
    } else {
        (Some(roc_auc(scores, labels)), Some(average_precision(scores, labels)))
    };

    let cm = Confusion::at(scores, labels, threshold);
    let degenerate = if cm.tp + cm.fp == n {
        Some("predicts only positives".to_string())
    } else if cm.tn + cm.fn_ == n {
        Some("predicts only negatives".to_string())
    } else {
        None
    };

    Ok(MetricsReport {
        r2: efron_r2(scores, labels),
        auc,
        pr_auc,
        bacc: cm.balanced_accuracy(),
        f1: cm.f1(),
        n,
        positive_rate: positives as f64 / n as f64,
        threshold,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// Mean of the true-positive and true-negative rates; with one class
    /// absent, the rate of the class that is present.
    pub fn balanced_accuracy(&self) -> f64 {
        let p = self.tp + self.fn_;
        let q = self.tn + self.fp;
        match (p, q) {
            (0, 0) => 0.0,
            (0, _) => self.tn as f64 / q as f64,
            (_, 0) => self.tp as f64 / p as f64,
            _ => 0.5 * (self.tp as f64 / p as f64 + self.tn as f64 / q as f64),
        }
    }

    /// F1 for the positive class; 0 when it is undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Efron's pseudo-R², `1 - SSE/SST`, clamped to `[0, 1]`.
pub fn efron_r2(scores: &[f64], labels: &[bool]) -> f64 {
    let n = labels.len() as f64;
    let mean = labels.iter().filter(|&&l| l).count() as f64 / n;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for (&s, &l) in scores.iter().zip(labels) {
        let y = if l { 1.0 } else { 0.0 };
        sse += (y - s) * (y - s);
        sst += (y - mean) * (y - mean);
    }
    if sst == 0.0 {
        return if sse == 0.0 { 1.0 } else { 0.0 };
    }
    (1.0 - sse / sst).clamp(0.0, 1.0)
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Mann-Whitney AUC: probability that a random positive outranks a random
/// negative, ties counting one half. Requires both classes.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let order = descending(scores);
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    // walk tie groups from the top, counting negatives strictly below
    let mut negatives_above = 0.0;
    let mut credit = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        let (mut gp, mut gn) = (0.0, 0.0);
        while j < order.len() && scores[order[j]] == s {
            if labels[order[j]] {
                gp += 1.0;
            } else {
                gn += 1.0;
            }
            j += 1;
        }
        let negatives_below = neg - negatives_above - gn;
        credit += gp * (negatives_below + 0.5 * gn);
        negatives_above += gn;
        i = j;
    }
    credit / (pos * neg)
}

/// Area under the precision-recall step curve: `sum (R_k - R_{k-1}) P_k` over
/// the distinct score thresholds, tied scores entering together.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let order = descending(scores);
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let (mut tp, mut seen) = (0.0, 0.0);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1.0;
            }
            seen += 1.0;
            i += 1;
        }
        let recall = tp / pos;
        area += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
    }
    area
}

/// One labelled line of a goodness-of-fit table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub report: MetricsReport,
    pub train_obs: usize,
    pub test_obs: usize,
}

/// Fixed-width table: model, R², AUC, PR, BACC, F1, train and test counts.
pub fn format_table(title: &str, rows: &[MetricsRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "   n/a".to_string(), |x| format!("{x:6.2}"));
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:<20} {:>6} {:>6} {:>6} {:>6} {:>8} {:>11} {:>10}",
        "", "R2", "AUC", "PR", "BACC", "F1-score", "Train obs.", "Test obs."
    );
    for r in rows {
        let m = &r.report;
        let _ = write!(
            out,
            "{:<20} {} {} {} {} {:>8} {:>11} {:>10}",
            r.model,
            fmt(Some(m.r2)),
            fmt(m.auc),
            fmt(m.pr_auc),
            fmt(Some(m.bacc)),
            format!("{:.2}", m.f1),
            r.train_obs,
            r.test_obs
        );
        if let Some(note) = &m.degenerate {
            let _ = write!(out, "  [{note}]");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier_scores_one() {
        let labels = [true, false, true, false, false];
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let m = evaluate(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.r2, 1.0);
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.pr_auc, Some(1.0));
        assert_eq!(m.bacc, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn uninformative_constant_score() {
        let labels = [true, false, true, false];
        let m = evaluate(&[0.5; 4], &labels, 0.5).unwrap();
        assert_eq!(m.auc, Some(0.5));
        assert_eq!(m.r2, 0.0);
        assert_eq!(m.degenerate.as_deref(), Some("predicts only positives"));
    }

    #[test]
    fn four_point_auc() {
        // pairs: (0.9,0.8) win, (0.9,0.2) win, (0.4,0.8) loss, (0.4,0.2) win
        let m = evaluate(&[0.9, 0.8, 0.4, 0.2], &[true, false, true, false], 0.5).unwrap();
        assert_eq!(m.auc, Some(0.75));
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        assert!(evaluate(&[], &[], 0.5).is_err());
        assert!(evaluate(&[0.1], &[true, false], 0.5).is_err());
    }

    #[test]
    fn single_class_gives_sentinels() {
        let m = evaluate(&[0.2, 0.7, 0.9], &[true, true, true], 0.5).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.pr_auc, None);
        assert!((m.bacc - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn f1_is_not_symmetric_under_label_complement() {
        let scores = [0.9, 0.8, 0.7, 0.3, 0.2];
        let labels = [true, true, false, false, true];
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let inverted: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        let a = evaluate(&scores, &labels, 0.5).unwrap();
        let b = evaluate(&inverted, &flipped, 0.5).unwrap();
        // bacc treats both classes alike; f1 only scores the positive class
        assert!((a.bacc - b.bacc).abs() < 1e-15);
        assert!((a.f1 - b.f1).abs() > 0.05);
    }

    #[test]
    fn table_marks_degenerate_rows() {
        let report = evaluate(&[0.9, 0.8], &[true, false], 0.5).unwrap();
        let t = format_table(
            "January",
            &[MetricsRow {
                model: "SVM".into(),
                report,
                train_obs: 10,
                test_obs: 2,
            }],
        );
        assert!(t.contains("predicts only positives"));
        assert!(t.contains("Train obs."));
    }
}
