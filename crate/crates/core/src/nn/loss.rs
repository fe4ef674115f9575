use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const SIMPLEX_TOL: f64 = 1e-6;
const LOG_FLOOR: f64 = 1e-12;

/// Probability vector over `K` classes used as a training target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    /// Validates that `probs` is nonnegative and sums to one within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLabel("empty label".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < -SIMPLEX_TOL) {
            return Err(Error::InvalidLabel(format!("negative mass in {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidLabel(format!("label sums to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(class: usize, classes: usize) -> Self {
        let mut v = vec![0.0; classes];
        v[class] = 1.0;
        Self(v)
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Softmax output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    pub confidence: f64,
}

impl Prediction {
    /// Softmax in double precision.
    pub fn from_logits<T: Scalar>(logits: &[T]) -> Self {
        let z: Vec<f64> = logits.iter().map(|v| v.f64()).collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Self::from_probabilities(exps.into_iter().map(|e| e / sum).collect())
    }

    /// Wraps an already normalised distribution; argmax ties go to the lowest index.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let (predicted_class, confidence) = probabilities.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) },
        );
        Self {
            probabilities,
            predicted_class,
            confidence,
        }
    }
}

/// `−Σ_k target_k · ln(max(prob_k, 1e-12))`.
pub fn loss_soft_ce(prediction: &Prediction, target: &SoftLabel) -> Result<f64> {
    let t = target.probs();
    if t.len() != prediction.probabilities.len() {
        return Err(Error::InvalidLabel(format!(
            "{} classes in target, {} in prediction",
            t.len(),
            prediction.probabilities.len()
        )));
    }
    let sum: f64 = t.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL || t.iter().any(|&p| p < -SIMPLEX_TOL) {
        return Err(Error::InvalidLabel("target off the simplex".into()));
    }
    Ok(-t
        .iter()
        .zip(&prediction.probabilities)
        .map(|(&tk, &pk)| tk * pk.max(LOG_FLOOR).ln())
        .sum::<f64>())
}
