//! Confusion matrix, accuracy/precision/recall/F1, ROC curve, and AUC.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    LengthMismatch {
        labels: usize,
        scores: usize,
    },
    /// ROC needs at least one positive and one negative label.
    SingleClass,
    EmptyInput,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { labels, scores } => {
                write!(f, "{labels} labels vs {scores} scores")
            }
            MetricsError::SingleClass => {
                write!(f, "ROC requires both a positive and a negative label")
            }
            MetricsError::EmptyInput => write!(f, "no samples to evaluate"),
        }
    }
}

impl std::error::Error for MetricsError {}

/// 2x2 table of true vs. predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "              predicted 0  predicted 1")?;
        writeln!(f, "  actual 0    {:>11}  {:>11}", self.tn, self.fp)?;
        write!(f, "  actual 1    {:>11}  {:>11}", self.fn_, self.tp)
    }
}

/// Tallies predictions at the given threshold; a probability equal to the
/// threshold counts as a positive prediction.
pub fn confusion(
    labels: &[f64],
    probabilities: &[f64],
    threshold: f64,
) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != probabilities.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: probabilities.len(),
        });
    }
    let mut cm = ConfusionMatrix {
        tn: 0,
        fp: 0,
        fn_: 0,
        tp: 0,
    };
    for (&y, &p) in labels.iter().zip(probabilities) {
        let predicted = p >= threshold;
        let actual = y != 0.0;
        match (actual, predicted) {
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (true, true) => cm.tp += 1,
        }
    }
    Ok(cm)
}

/// Precision, recall, and F1; degenerate denominators yield 0.
pub fn prf1(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let precision = if cm.tp + cm.fp == 0 {
        0.0
    } else {
        cm.tp as f64 / (cm.tp + cm.fp) as f64
    };
    let recall = if cm.tp + cm.fn_ == 0 {
        0.0
    } else {
        cm.tp as f64 / (cm.tp + cm.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok((cm.tp + cm.tn) as f64 / total as f64)
}

/// ROC curve points ordered from (0,0) to (1,1), plus the trapezoidal AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate) per threshold.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// CSV rows `fpr,tpr` with the fixed header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (fpr, tpr) in &self.points {
            out.push_str(&format!("{fpr:.6},{tpr:.6}\n"));
        }
        out
    }
}

/// Sweeps a threshold across every distinct score (descending), emitting one
/// point per threshold; tied scores collapse into a single point. Endpoints
/// (0,0) and (1,1) are always present. AUC is the trapezoidal integral.
pub fn roc(labels: &[f64], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y != 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        // consume the whole tie group before emitting a point
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] != 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

/// Full evaluation surface: classification metrics at threshold 0.5 plus AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    #[serde(flatten)]
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_scores(labels: &[f64], scores: &[f64]) -> Result<Self, MetricsError> {
        let cm = confusion(labels, scores, 0.5)?;
        let (precision, recall, f1) = prf1(&cm);
        let curve = roc(labels, scores)?;
        Ok(MetricsReport {
            accuracy: accuracy(&cm)?,
            precision,
            recall,
            f1,
            auc: curve.auc,
            confusion: cm,
        })
    }
}
