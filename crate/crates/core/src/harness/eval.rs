//! Clean, corrupted and adversarial evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd_attack_batch, AttackConfig};
use crate::calibration::{calibration_report, corrupted_aggregate, CalibrationReport, CorruptedSummary};
use crate::data::{corrupt, CorruptionKind, CorruptionSpec, Dataset, CORRUPTION_KINDS};
use crate::error::Result;
use crate::image::{stack, Image};
use crate::nn::{Model, Prediction};
use crate::rng::{purpose, stream};
use crate::scalar::Scalar;

const EVAL_BATCH: usize = 256;
const ATTACK_BATCH: usize = 128;

pub fn predict_all<T: Scalar>(model: &Model<T>, images: &[Image<T>]) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let refs: Vec<&Image<T>> = chunk.iter().collect();
        out.extend(model.predict_batch(&stack(&refs)?)?);
    }
    Ok(out)
}

/// Full-dataset forward pass summarised with `bins` confidence bins.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    dataset: &Dataset<T>,
    bins: usize,
) -> Result<CalibrationReport> {
    let preds = predict_all(model, dataset.images())?;
    calibration_report(&preds, dataset.labels(), bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionCell {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub accuracy: f64,
    pub ece: f64,
    pub mean_confidence: f64,
}

/// Evaluates every (kind, severity) cell of the corruption suite. Noise is
/// keyed by `seed`, kind and sample, so repeated calls see identical images
/// and the severities of one kind share their random draws.
pub fn evaluate_corrupted<T: Scalar>(
    model: &Model<T>,
    dataset: &Dataset<T>,
    bins: usize,
    seed: u64,
) -> Result<(CorruptedSummary, Vec<CorruptionCell>)> {
    let mut reports = Vec::new();
    let mut cells = Vec::new();
    for spec in CorruptionSpec::suite() {
        let kind_index = CORRUPTION_KINDS.iter().position(|&k| k == spec.kind).expect("known kind") as u64;
        let images: Vec<Image<T>> = dataset
            .images()
            .iter()
            .enumerate()
            .map(|(i, im)| {
                corrupt(
                    im,
                    &spec,
                    &mut stream(&[seed, purpose::CORRUPTION, kind_index, i as u64]),
                )
            })
            .collect();
        let preds = predict_all(model, &images)?;
        let report = calibration_report(&preds, dataset.labels(), bins)?;
        cells.push(CorruptionCell {
            kind: spec.kind,
            severity: spec.severity,
            accuracy: report.accuracy,
            ece: report.ece,
            mean_confidence: report.mean_confidence,
        });
        reports.push(report);
    }
    Ok((corrupted_aggregate(&reports)?, cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialResult {
    pub accuracy: f64,
    /// Samples left unattacked after a non-finite gradient.
    pub skipped: usize,
}

/// Accuracy under the best-of-restarts attack at radius `attack.eps_max`.
/// A zero radius reduces to clean accuracy.
pub fn evaluate_adversarial<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    dataset: &Dataset<T>,
    attack: &AttackConfig,
    rng: &mut R,
) -> Result<AdversarialResult> {
    if dataset.is_empty() {
        return Err(crate::Error::RejectedInput("empty evaluation set".into()));
    }
    if attack.eps_max == 0.0 {
        let preds = predict_all(model, dataset.images())?;
        let correct = preds
            .iter()
            .zip(dataset.labels())
            .filter(|(p, &y)| p.predicted_class == y)
            .count();
        return Ok(AdversarialResult {
            accuracy: correct as f64 / dataset.len() as f64,
            skipped: 0,
        });
    }
    attack.validate()?;
    let mut correct = 0;
    let mut skipped = 0;
    for (imgs, ys) in dataset
        .images()
        .chunks(ATTACK_BATCH)
        .zip(dataset.labels().chunks(ATTACK_BATCH))
    {
        let eps = vec![attack.eps_max; imgs.len()];
        let out = pgd_attack_batch(model, imgs, ys, &eps, attack, rng)?;
        skipped += out.skipped.len();
        let preds = predict_all(model, &out.images)?;
        correct += preds
            .iter()
            .zip(ys)
            .filter(|(p, &y)| p.predicted_class == y)
            .count();
    }
    Ok(AdversarialResult {
        accuracy: correct as f64 / dataset.len() as f64,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Model;

    fn data() -> Dataset<f64> {
        let images = (0..30)
            .map(|i| Image::new(1, 3, 3, (0..9).map(|j| ((i * 5 + j) % 9) as f64 / 8.0).collect()).unwrap())
            .collect();
        Dataset::new("e", images, (0..30).map(|i| i % 10).collect(), 10).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let d = data();
        let model = Model::<f64>::zeroed([1, 3, 3], crate::nn::mlp_layers([1, 3, 3], &[4], 10)).unwrap();
        let r = evaluate(&model, &d, 15).unwrap();
        assert!((r.mean_confidence - 0.1).abs() < 1e-15);
        assert!((r.ece - (r.accuracy - 0.1).abs()).abs() < 1e-12);
        assert_eq!(evaluate(&model, &d, 15).unwrap(), r);
    }

    #[test]
    fn zero_radius_equals_clean_accuracy() {
        let d = data();
        let model = Model::<f64>::mlp([1, 3, 3], &[8], 10, &mut stream(&[1])).unwrap();
        let clean = evaluate(&model, &d, 15).unwrap().accuracy;
        let mut cfg = AttackConfig::evaluation(0.03);
        cfg.eps_max = 0.0;
        let adv = evaluate_adversarial(&model, &d, &cfg, &mut stream(&[2])).unwrap();
        assert_eq!(adv.accuracy, clean);
        let adv = evaluate_adversarial(&model, &d, &AttackConfig::evaluation(0.3), &mut stream(&[2])).unwrap();
        assert!(adv.accuracy <= clean);
    }

    #[test]
    fn corruption_suite_is_repeatable() {
        let d = data();
        let model = Model::<f64>::mlp([1, 3, 3], &[8], 10, &mut stream(&[1])).unwrap();
        let (a, cells) = evaluate_corrupted(&model, &d, 15, 3).unwrap();
        let (b, _) = evaluate_corrupted(&model, &d, 15, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(cells.len(), 30);
    }
}
