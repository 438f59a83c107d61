//! Classification metrics over masked pixel maps.
//!
//! All statistics are computed in f64 from integer confusion counts, so the
//! same inputs give bit-identical reports regardless of pixel order.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Errors from scoring a prediction map against reference labels.
#[derive(Debug)]
pub enum MetricsError {
    /// No pixel was both masked in and labeled.
    Empty,
    /// The three input maps disagree on pixel count.
    LengthMismatch { pred: usize, labels: usize, mask: usize },
    /// A masked-in reference label lies outside `1..=class_count`.
    LabelOutOfRange { index: usize, label: u16, class_count: u16 },
    /// A masked-in prediction lies outside `1..=class_count`.
    PredictionOutOfRange { index: usize, value: u16, class_count: u16 },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::Empty => write!(f, "no masked pixel carries a reference label"),
            MetricsError::LengthMismatch { pred, labels, mask } => write!(
                f,
                "prediction ({pred}), label ({labels}) and mask ({mask}) maps differ in length"
            ),
            MetricsError::LabelOutOfRange { index, label, class_count } => write!(
                f,
                "pixel {index}: reference label {label} outside 1..={class_count}"
            ),
            MetricsError::PredictionOutOfRange { index, value, class_count } => write!(
                f,
                "pixel {index}: predicted class {value} outside 1..={class_count}"
            ),
        }
    }
}

impl std::error::Error for MetricsError {}

/// Scores for one prediction map.
///
/// `confusion` is row-major `class_count x class_count`; row = reference
/// class - 1, column = predicted class - 1. `per_class` holds each class's
/// recall, `None` when the class has no masked reference pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_count: u16,
    pub n: u64,
    pub confusion: Vec<u64>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub per_class: Vec<Option<f64>>,
}

/// Builds a confusion matrix over masked pixels and derives overall
/// accuracy, average per-class accuracy and Cohen's kappa from it.
pub fn evaluate(
    pred: &[u16],
    labels: &[u16],
    mask: &[bool],
    class_count: u16,
) -> Result<MetricsReport, MetricsError> {
    if pred.len() != labels.len() || labels.len() != mask.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            labels: labels.len(),
            mask: mask.len(),
        });
    }
    let k = class_count as usize;
    let mut confusion = vec![0u64; k * k];
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        let label = labels[i];
        if label == 0 || label > class_count {
            return Err(MetricsError::LabelOutOfRange { index: i, label, class_count });
        }
        let value = pred[i];
        if value == 0 || value > class_count {
            return Err(MetricsError::PredictionOutOfRange { index: i, value, class_count });
        }
        confusion[(label as usize - 1) * k + (value as usize - 1)] += 1;
    }
    report_from_confusion(class_count, confusion)
}

fn report_from_confusion(
    class_count: u16,
    confusion: Vec<u64>,
) -> Result<MetricsReport, MetricsError> {
    let k = class_count as usize;
    let n: u64 = confusion.iter().sum();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let nf = n as f64;

    let mut diag_total = 0u64;
    let mut per_class = Vec::with_capacity(k);
    let mut expected = 0.0f64;
    for c in 0..k {
        let row: u64 = confusion[c * k..(c + 1) * k].iter().sum();
        let col: u64 = (0..k).map(|r| confusion[r * k + c]).sum();
        let diag = confusion[c * k + c];
        diag_total += diag;
        expected += (row as f64 / nf) * (col as f64 / nf);
        if row == 0 {
            log::warn!("class {} has no reference pixels, excluded from aa", c + 1);
            per_class.push(None);
        } else {
            per_class.push(Some(diag as f64 / row as f64));
        }
    }

    let oa = diag_total as f64 / nf;
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    // Kappa degenerates when chance agreement is total; score agreement
    // directly there instead of dividing by zero.
    let kappa = if expected >= 1.0 {
        if oa >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (oa - expected) / (1.0 - expected)
    };

    Ok(MetricsReport { class_count, n, confusion, oa, aa, kappa, per_class })
}

impl MetricsReport {
    /// One `key=value` pair per line, stable order, six decimals.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n={}\n", self.n));
        out.push_str(&format!("oa={:.6}\n", self.oa));
        out.push_str(&format!("aa={:.6}\n", self.aa));
        out.push_str(&format!("kappa={:.6}\n", self.kappa));
        for (c, acc) in self.per_class.iter().enumerate() {
            match acc {
                Some(a) => out.push_str(&format!("class_{}={a:.6}\n", c + 1)),
                None => out.push_str(&format!("class_{}=absent\n", c + 1)),
            }
        }
        out
    }
}

/// Mean and sample standard deviation (n - 1) of repeated scores.
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "aggregate: no values");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
