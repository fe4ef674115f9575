//! Run artifacts: run.json, metrics.csv, labels.csv, bins.csv and the checkpoint.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use crate::error::Result;
use crate::harness::train::RunReport;
use crate::nn::{checkpoint, Model};
use crate::scalar::Scalar;

pub fn run_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// One row per epoch.
pub fn metrics_csv(report: &RunReport) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_acc,val_ece,mean_label_conf,skipped_attacks\n");
    for e in &report.epochs {
        let mean = if e.labels.is_empty() {
            String::new()
        } else {
            (e.labels.iter().map(|l| l.y_true_conf).sum::<f64>() / e.labels.len() as f64).to_string()
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch, e.lr, e.train_loss, e.val_accuracy, e.val_ece, mean, e.skipped_attacks
        ));
    }
    s
}

/// Label-table trajectory, epoch 0 being the initial table.
pub fn labels_csv(report: &RunReport) -> String {
    let mut s = String::from("epoch,family,bucket,y_true_conf\n");
    let snapshots = std::iter::once((0, &report.initial_labels))
        .chain(report.epochs.iter().map(|e| (e.epoch, &e.labels)));
    for (epoch, labels) in snapshots {
        for l in labels {
            s.push_str(&format!("{epoch},{},{},{}\n", l.family, l.bucket, l.y_true_conf));
        }
    }
    s
}

/// Reliability bins of the final clean test evaluation.
pub fn bins_csv(report: &RunReport) -> Option<String> {
    report.final_metrics.as_ref().map(|m| m.clean.bins_csv())
}

pub fn write_artifacts<T: Scalar>(dir: &Path, report: &RunReport, model: &Model<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("run.json"), run_json(report)?)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(report))?;
    fs::write(dir.join("labels.csv"), labels_csv(report))?;
    if let Some(bins) = bins_csv(report) {
        fs::write(dir.join("bins.csv"), bins)?;
    }
    let mut w = BufWriter::new(File::create(dir.join("model.alnn"))?);
    checkpoint::save(model, &mut w)?;
    Ok(())
}
