//! Expected calibration error and related summaries.
//!
//! Confidence bins are equal-width and right-closed: bin `r` (1-based) holds
//! confidences in `((r−1)/R, r/R]`, with confidence exactly 0 sent to bin 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Prediction;

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: usize,
    /// Fraction correct in the bin, 0 when empty.
    pub accuracy: f64,
    /// Mean confidence in the bin, 0 when empty.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub bins: Vec<BinStats>,
    pub samples: usize,
}

impl CalibrationReport {
    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    /// Reliability data as CSV with columns `r,count,acc,conf`.
    pub fn bins_csv(&self) -> String {
        let mut s = String::from("r,count,acc,conf\n");
        for (r, b) in self.bins.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r + 1,
                b.count,
                b.accuracy,
                b.confidence
            ));
        }
        s
    }
}

/// Zero-based bin for a confidence under right-closed edges `r/R`.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    let r = bins as f64;
    let mut idx = ((confidence * r).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    // correct for rounding in `confidence * R` so membership follows the edges
    while idx > 0 && confidence <= idx as f64 / r {
        idx -= 1;
    }
    while idx + 1 < bins && confidence > (idx + 1) as f64 / r {
        idx += 1;
    }
    idx
}

/// Report from per-sample confidences and correctness flags.
pub fn report_from_outcomes(
    confidences: &[f64],
    correct: &[bool],
    bins: usize,
) -> Result<CalibrationReport> {
    if confidences.is_empty() {
        return Err(Error::RejectedInput("no predictions to calibrate".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::RejectedInput(format!(
            "{} confidences for {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("bin count must be >= 1".into()));
    }
    let mut count = vec![0usize; bins];
    let mut hits = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !c.is_finite() {
            return Err(Error::NonFinite("confidence".into()));
        }
        let b = bin_index(c, bins);
        count[b] += 1;
        hits[b] += usize::from(ok);
        conf_sum[b] += c;
    }
    let m = confidences.len() as f64;
    let mut ece = 0.0;
    let stats: Vec<BinStats> = (0..bins)
        .map(|b| {
            if count[b] == 0 {
                return BinStats {
                    count: 0,
                    accuracy: 0.0,
                    confidence: 0.0,
                };
            }
            let n = count[b] as f64;
            let acc = hits[b] as f64 / n;
            let conf = conf_sum[b] / n;
            ece += n / m * (acc - conf).abs();
            BinStats {
                count: count[b],
                accuracy: acc,
                confidence: conf,
            }
        })
        .collect();
    Ok(CalibrationReport {
        ece,
        accuracy: hits.iter().sum::<usize>() as f64 / m,
        mean_confidence: conf_sum.iter().sum::<f64>() / m,
        bins: stats,
        samples: confidences.len(),
    })
}

pub fn calibration_report(
    predictions: &[Prediction],
    labels: &[usize],
    bins: usize,
) -> Result<CalibrationReport> {
    if predictions.len() != labels.len() {
        return Err(Error::RejectedInput(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let conf: Vec<f64> = predictions.iter().map(|p| p.confidence).collect();
    let correct: Vec<bool> = predictions
        .iter()
        .zip(labels)
        .map(|(p, &y)| p.predicted_class == y)
        .collect();
    report_from_outcomes(&conf, &correct, bins)
}

/// Corrupted-benchmark summary: unweighted means over (kind, severity) cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptedSummary {
    pub accuracy: f64,
    pub ece: f64,
    pub mean_confidence: f64,
}

pub fn corrupted_aggregate(reports: &[CalibrationReport]) -> Result<CorruptedSummary> {
    if reports.is_empty() {
        return Err(Error::RejectedInput("no corruption reports".into()));
    }
    let n = reports.len() as f64;
    Ok(CorruptedSummary {
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        ece: reports.iter().map(|r| r.ece).sum::<f64>() / n,
        mean_confidence: reports.iter().map(|r| r.mean_confidence).sum::<f64>() / n,
    })
}

/// `(method_clean + method_adv) − (base_clean + base_adv)`, in whatever unit
/// the inputs use (percentage points for reporting).
pub fn accuracy_difference(
    method_clean: f64,
    method_adv: f64,
    base_clean: f64,
    base_adv: f64,
) -> f64 {
    (method_clean + method_adv) - (base_clean + base_adv)
}
