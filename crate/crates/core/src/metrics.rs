//! Regression-as-classification evaluation metrics for sentiment scores.
//!
//! Binning conventions (stated here because the literature varies):
//! seven- and five-class accuracy round-and-clamp both arguments to
//! integers in `[-3, 3]` / `[-2, 2]`; three-class uses the sign with a
//! neutral band `|v| < 0.1`; binary accuracy and F1 compare negative vs
//! non-negative after dropping samples whose label is exactly zero.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricError {
    LengthMismatch {
        predictions: usize,
        labels: usize,
    },
    /// Binary metrics are undefined when every label is exactly zero.
    NoNonzeroLabels,
    /// `k` must be one of 2, 3, 5, 7.
    BadK {
        k: usize,
    },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::LengthMismatch {
                predictions,
                labels,
            } => {
                write!(
                    f,
                    "length mismatch: {predictions} predictions vs {labels} labels"
                )
            }
            MetricError::NoNonzeroLabels => {
                write!(f, "all labels are zero; binary metrics undefined")
            }
            MetricError::BadK { k } => write!(f, "unsupported class count k={k}"),
        }
    }
}

impl std::error::Error for MetricError {}

fn check_lengths(pred: &[f64], labels: &[f64]) -> Result<(), MetricError> {
    if pred.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: pred.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

fn round_clamp(v: f64, bound: f64) -> i64 {
    v.max(-bound).min(bound).round() as i64
}

fn three_class(v: f64) -> i64 {
    if v.abs() < 0.1 {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Accuracy (percent) after binning into `k` classes.
pub fn acc_k(pred: &[f64], labels: &[f64], k: usize) -> Result<f64, MetricError> {
    check_lengths(pred, labels)?;
    let bin: fn(f64) -> i64 = match k {
        7 => |v| round_clamp(v, 3.0),
        5 => |v| round_clamp(v, 2.0),
        3 => three_class,
        2 => |v| i64::from(v >= 0.0),
        _ => return Err(MetricError::BadK { k }),
    };
    let (mut hits, mut total) = (0usize, 0usize);
    for (&p, &y) in pred.iter().zip(labels) {
        if k == 2 && y == 0.0 {
            continue;
        }
        total += 1;
        if bin(p) == bin(y) {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::NoNonzeroLabels);
    }
    Ok(100.0 * hits as f64 / total as f64)
}

/// Weighted-average F1 over the two sentiment classes (weights equal to
/// class support), on the same filtered set as binary accuracy.
pub fn f1_binary(pred: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(pred, labels)?;
    // confusion counts indexed by [label is non-negative][pred is non-negative]
    let mut counts = [[0usize; 2]; 2];
    for (&p, &y) in pred.iter().zip(labels) {
        if y == 0.0 {
            continue;
        }
        counts[usize::from(y >= 0.0)][usize::from(p >= 0.0)] += 1;
    }
    let total: usize = counts.iter().flatten().sum();
    if total == 0 {
        return Err(MetricError::NoNonzeroLabels);
    }
    let mut weighted = 0.0;
    for class in 0..2 {
        let support = counts[class][0] + counts[class][1];
        if support == 0 {
            continue;
        }
        let tp = counts[class][class];
        let predicted = counts[0][class] + counts[1][class];
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = tp as f64 / support as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted += f1 * support as f64 / total as f64;
    }
    Ok(100.0 * weighted)
}

pub fn mae(pred: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(pred, labels)?;
    let n = pred.len().max(1);
    Ok(pred
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y).abs())
        .sum::<f64>()
        / n as f64)
}

/// Sample Pearson correlation. The flag is false (and the value zero) when
/// either argument has no variation.
pub fn pearson_corr(pred: &[f64], labels: &[f64]) -> Result<(f64, bool), MetricError> {
    check_lengths(pred, labels)?;
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Ok((0.0, false));
    }
    let constant = |xs: &[f64]| {
        let first = xs[0];
        xs.iter().all(|&x| x == first)
    };
    if constant(pred) || constant(labels) {
        return Ok((0.0, false));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / n;
    let (mp, my) = (mean(pred), mean(labels));
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vy = 0.0;
    for (&p, &y) in pred.iter().zip(labels) {
        cov += (p - mp) * (y - my);
        vp += (p - mp) * (p - mp);
        vy += (y - my) * (y - my);
    }
    if vp == 0.0 || vy == 0.0 {
        return Ok((0.0, false));
    }
    Ok((cov / (vp * vy).sqrt(), true))
}

/// The full metric suite of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub acc7: f64,
    pub acc5: f64,
    pub acc3: f64,
    pub acc2: f64,
    pub f1: f64,
    pub mae: f64,
    pub corr: f64,
    pub corr_defined: bool,
}

pub fn full_report(pred: &[f64], labels: &[f64]) -> Result<MetricReport, MetricError> {
    let (corr, corr_defined) = pearson_corr(pred, labels)?;
    Ok(MetricReport {
        acc7: acc_k(pred, labels, 7)?,
        acc5: acc_k(pred, labels, 5)?,
        acc3: acc_k(pred, labels, 3)?,
        acc2: acc_k(pred, labels, 2)?,
        f1: f1_binary(pred, labels)?,
        mae: mae(pred, labels)?,
        corr,
        corr_defined,
    })
}
