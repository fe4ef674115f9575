//! Per-bucket adaptive labels and the static baselines.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::BucketKey;
use crate::calibration::CalibrationReport;
use crate::error::{Error, Result};
use crate::nn::SoftLabel;

/// True-class confidence per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    entries: BTreeMap<BucketKey, f64>,
    classes: usize,
    alpha: f64,
    epoch: usize,
}

/// What one bucket update did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub before: f64,
    pub raw: f64,
    pub after: f64,
    pub ece: f64,
    pub accuracy: f64,
    pub confidence: f64,
}

pub fn init_label_table(classes: usize, buckets: &[BucketKey], alpha: f64) -> Result<LabelTable> {
    if classes < 2 {
        return Err(Error::InvalidConfig(format!("need K >= 2, got {classes}")));
    }
    if buckets.is_empty() {
        return Err(Error::InvalidConfig("label table needs buckets".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha {alpha}")));
    }
    let mut entries = BTreeMap::new();
    for &b in buckets {
        if entries.insert(b, 1.0).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate bucket {b}")));
        }
    }
    Ok(LabelTable {
        entries,
        classes,
        alpha,
        epoch: 0,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ỹ − α·ECE·sign(conf − acc)` clipped to `[max(acc, 1/K), 1]`.
pub fn updated_confidence(
    current: f64,
    alpha: f64,
    ece: f64,
    confidence: f64,
    accuracy: f64,
    classes: usize,
) -> (f64, f64) {
    let raw = current - alpha * ece * sign(confidence - accuracy);
    let floor = accuracy.max(1.0 / classes as f64).min(1.0);
    (raw, raw.clamp(floor, 1.0))
}

impl LabelTable {
    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn buckets(&self) -> impl Iterator<Item = &BucketKey> {
        self.entries.keys()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&BucketKey, f64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    pub fn get(&self, bucket: &BucketKey) -> Result<f64> {
        self.entries
            .get(bucket)
            .copied()
            .ok_or_else(|| Error::InvalidBucket(bucket.to_string()))
    }

    /// Moves the epoch counter forward once all buckets have been updated.
    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Applies the calibration feedback of one bucket's validation set.
    pub fn update_bucket(
        &mut self,
        bucket: &BucketKey,
        report: &CalibrationReport,
    ) -> Result<UpdateRecord> {
        let classes = self.classes;
        let alpha = self.alpha;
        let entry = self
            .entries
            .get_mut(bucket)
            .ok_or_else(|| Error::InvalidBucket(bucket.to_string()))?;
        if ![report.ece, report.accuracy, report.mean_confidence]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite(format!("calibration report for {bucket}")));
        }
        let before = *entry;
        let (raw, after) = updated_confidence(
            before,
            alpha,
            report.ece,
            report.mean_confidence,
            report.accuracy,
            classes,
        );
        *entry = after;
        Ok(UpdateRecord {
            before,
            raw,
            after,
            ece: report.ece,
            accuracy: report.accuracy,
            confidence: report.mean_confidence,
        })
    }

    /// `ỹ` on the true class, `(1 − ỹ)/(K − 1)` on every other class.
    pub fn soft_label(&self, bucket: &BucketKey, true_class: usize) -> Result<SoftLabel> {
        let y = self.get(bucket)?;
        spread(self.classes, &[(true_class, y)])
    }

    /// Two-class label for a mixup sample whose minor component `y_i` has
    /// weight `γ′ ≤ 0.5` and whose dominant component is `y_j`.
    pub fn mixup_soft_label(
        &self,
        bucket: &BucketKey,
        y_i: usize,
        y_j: usize,
        gamma_prime: f64,
    ) -> Result<SoftLabel> {
        if !(0.0..=0.5).contains(&gamma_prime) {
            return Err(Error::InvalidConfig(format!(
                "gamma' {gamma_prime} outside [0, 0.5]"
            )));
        }
        if y_i == y_j {
            return self.soft_label(bucket, y_j);
        }
        let dominant = self.get(bucket)?;
        let minor = if self.classes == 2 {
            1.0 - dominant
        } else if gamma_prime == 0.5 {
            // the ratio γ′/(1−γ′) is exactly 1 here
            (1.0 - dominant).min(dominant)
        } else {
            (1.0 - dominant).min(gamma_prime / (1.0 - gamma_prime) * dominant)
        };
        let rest = 1.0 - dominant - minor;
        assert!(rest >= -1e-12, "mixup remainder {rest} is negative");
        spread(self.classes, &[(y_j, dominant), (y_i, minor)])
    }
}

/// Fixed entries with the remaining mass spread evenly over the other classes.
fn spread(classes: usize, fixed: &[(usize, f64)]) -> Result<SoftLabel> {
    for &(c, _) in fixed {
        if c >= classes {
            return Err(Error::InvalidLabel(format!(
                "class {c} for {classes} classes"
            )));
        }
    }
    let assigned: f64 = fixed.iter().map(|&(_, v)| v).sum();
    let others = classes - fixed.len();
    let fill = if others == 0 {
        0.0
    } else {
        ((1.0 - assigned) / others as f64).max(0.0)
    };
    let mut probs = vec![fill; classes];
    for &(c, v) in fixed {
        probs[c] = v;
    }
    SoftLabel::new(probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    OneHot,
    LabelSmoothing,
    Ccat,
    Autolabel,
}

impl LabelMode {
    pub fn name(self) -> &'static str {
        match self {
            LabelMode::OneHot => "one_hot",
            LabelMode::LabelSmoothing => "label_smoothing",
            LabelMode::Ccat => "ccat",
            LabelMode::Autolabel => "autolabel",
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "one_hot" => LabelMode::OneHot,
            "label_smoothing" => LabelMode::LabelSmoothing,
            "ccat" => LabelMode::Ccat,
            "autolabel" => LabelMode::Autolabel,
            _ => return Err(Error::InvalidConfig(format!("unknown label mode {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub mode: LabelMode,
    /// Smoothing mass for label smoothing, exponent for CCAT.
    pub rho: f64,
}

impl BaselineConfig {
    pub fn ccat() -> Self {
        BaselineConfig {
            mode: LabelMode::Ccat,
            rho: 10.0,
        }
    }
}

/// Static label for the non-adaptive modes.
pub fn baseline_label(
    config: &BaselineConfig,
    true_class: usize,
    classes: usize,
    delta_inf: f64,
    eps: f64,
) -> Result<SoftLabel> {
    if classes < 2 || true_class >= classes {
        return Err(Error::InvalidLabel(format!(
            "class {true_class} for {classes} classes"
        )));
    }
    if !(config.rho >= 0.0) {
        return Err(Error::InvalidConfig(format!("rho {} < 0", config.rho)));
    }
    match config.mode {
        LabelMode::OneHot => Ok(SoftLabel::one_hot(true_class, classes)),
        LabelMode::LabelSmoothing => {
            if config.rho > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "smoothing {} > 1",
                    config.rho
                )));
            }
            let mut p = vec![config.rho / (classes - 1) as f64; classes];
            p[true_class] = 1.0 - config.rho;
            SoftLabel::new(p)
        }
        LabelMode::Ccat => {
            if !(eps > 0.0) {
                return Err(Error::InvalidConfig(format!("ccat needs eps > 0, got {eps}")));
            }
            let g = (1.0 - (delta_inf / eps).min(1.0)).powf(config.rho);
            let u = (1.0 - g) / classes as f64;
            let mut p = vec![u; classes];
            p[true_class] = g + u;
            SoftLabel::new(p)
        }
        LabelMode::Autolabel => Err(Error::InvalidConfig(
            "autolabel labels come from the label table".into(),
        )),
    }
}
