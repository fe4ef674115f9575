//! Accuracy and calibration against the maximum transformation magnitude.

use serde::{Deserialize, Serialize};

use crate::augment::MOTIVATION_OPS;
use crate::error::{Error, Result};
use crate::harness::config::{Method, TrainConfig};
use crate::harness::train::{prepare_data, run_training_with, Hooks};
use crate::labels::LabelMode;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub magnitude: u8,
    pub seed: u64,
    pub mode: LabelMode,
    pub clean_accuracy: f64,
    pub clean_ece: f64,
    pub clean_confidence: f64,
    pub corrupted_accuracy: f64,
    pub corrupted_ece: f64,
    pub corrupted_confidence: f64,
}

/// Trains one RandAug run over the five geometric/tonal ops per
/// (magnitude, seed, mode) and evaluates clean and corrupted test sets.
///
/// Seeds share data between modes, so the two label modes see identical
/// splits and initial weights.
pub fn run_motivation_sweep<T: Scalar>(
    base: &TrainConfig,
    magnitudes: &[u8],
    seeds: &[u64],
    modes: &[LabelMode],
    mut progress: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.train.method = Method::RandAug;
        cfg.aug.ops = MOTIVATION_OPS.to_vec();
        cfg.eval.corruption = true;
        let data = prepare_data::<T>(&cfg)?;
        for &magnitude in magnitudes {
            for &mode in modes {
                let mut run = cfg.clone();
                run.aug.m_max = magnitude;
                run.label.mode = mode;
                let out = run_training_with(&run, &data, Hooks::default())?;
                if let Some(reason) = out.report.aborted {
                    return Err(Error::NonFinite(format!(
                        "sweep run m={magnitude} seed={seed} {mode}: {reason}"
                    )));
                }
                let m = out.report.final_metrics.expect("finished run has metrics");
                let corrupted = m.corrupted.expect("corruption enabled");
                let row = SweepRow {
                    magnitude,
                    seed,
                    mode,
                    clean_accuracy: m.clean.accuracy,
                    clean_ece: m.clean.ece,
                    clean_confidence: m.clean.mean_confidence,
                    corrupted_accuracy: corrupted.accuracy,
                    corrupted_ece: corrupted.ece,
                    corrupted_confidence: corrupted.mean_confidence,
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("max_magnitude,seed,mode,clean_acc,clean_ece,clean_conf,corrupted_acc,corrupted_ece,corrupted_conf\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.magnitude,
            r.seed,
            r.mode,
            r.clean_accuracy,
            r.clean_ece,
            r.clean_confidence,
            r.corrupted_accuracy,
            r.corrupted_ece,
            r.corrupted_confidence
        ));
    }
    s
}
