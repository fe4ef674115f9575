//! Transformation-distance buckets.
//!
//! Each augmentation family discretises its distance parameter into buckets
//! that share one label-table entry. Continuous parameters use ceiling
//! buckets: bucket `n` covers `((n−1)·max/N, n·max/N]`, and the value 0 joins
//! bucket 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::augment::ops::{OpType, MAX_MAGNITUDE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BucketKey {
    RandAug { op: OpType, magnitude: u8 },
    AugMix { depth: u8, n: u16 },
    Adversarial { n: u16 },
    Mixup { n: u16 },
}

impl BucketKey {
    pub fn family(&self) -> &'static str {
        match self {
            BucketKey::RandAug { .. } => "randaug",
            BucketKey::AugMix { .. } => "augmix",
            BucketKey::Adversarial { .. } => "adversarial",
            BucketKey::Mixup { .. } => "mixup",
        }
    }

    /// Coordinates within the family, `:`-joined.
    pub fn coords(&self) -> String {
        match self {
            BucketKey::RandAug { op, magnitude } => format!("{op}:{magnitude}"),
            BucketKey::AugMix { depth, n } => format!("{depth}:{n}"),
            BucketKey::Adversarial { n } | BucketKey::Mixup { n } => n.to_string(),
        }
    }
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.family(), self.coords())
    }
}

const EDGE_TOLERANCE: f64 = 1e-12;

/// Smallest `n ∈ 1..=buckets` with `value ≤ max·(n/buckets)`; 0 maps to 1.
///
/// Membership is decided against the edges `max·k/N` with a tolerance of
/// `1e-12·max`, so a value on an edge (including decimal inputs such as
/// `0.07` of `0.1` that miss it by an ulp) lands in the lower bucket.
pub fn ceil_bucket(value: f64, max: f64, buckets: usize) -> usize {
    assert!(buckets >= 1, "at least one bucket");
    let n = buckets as f64;
    let tol = max.abs() * EDGE_TOLERANCE;
    let edge = |k: usize| max * (k as f64 / n) + tol;
    let est = (value / max * n).ceil();
    let mut k = if est.is_finite() {
        est.clamp(1.0, n) as usize
    } else {
        1
    };
    while k > 1 && value <= edge(k - 1) {
        k -= 1;
    }
    while k < buckets && value > edge(k) {
        k += 1;
    }
    k
}

/// `(augmix, d, ⌈λN⌉)` with λ = 0 merged into bucket 1.
pub fn augmix_bucket(depth: u8, lambda: f64, buckets: usize) -> BucketKey {
    BucketKey::AugMix {
        depth,
        n: ceil_bucket(lambda.clamp(0.0, 1.0), 1.0, buckets) as u16,
    }
}

/// `(mixup, ⌈2N·min(γ, 1−γ)⌉)` with γ ∈ {0, 1} merged into bucket 1.
pub fn mixup_bucket(gamma: f64, buckets: usize) -> BucketKey {
    let g = gamma.clamp(0.0, 1.0);
    BucketKey::Mixup {
        n: ceil_bucket(2.0 * g.min(1.0 - g), 1.0, buckets) as u16,
    }
}

/// `(adversarial, ⌈ε·N/ε_max⌉)` with ε = 0 merged into bucket 1.
pub fn adv_bucket(eps: f64, eps_max: f64, buckets: usize) -> Result<BucketKey> {
    if !(eps_max > 0.0) || buckets == 0 {
        return Err(Error::InvalidConfig(format!(
            "adversarial buckets need eps_max > 0 and N >= 1, got {eps_max}, {buckets}"
        )));
    }
    if !(0.0..=eps_max).contains(&eps) {
        return Err(Error::InvalidConfig(format!(
            "eps {eps} outside [0, {eps_max}]"
        )));
    }
    Ok(BucketKey::Adversarial {
        n: ceil_bucket(eps, eps_max, buckets) as u16,
    })
}

/// `(type, m)` grid: magnitude-bearing ops × `1..=m_max`, parameterless ops once.
pub fn randaug_buckets(ops: &[OpType], m_max: u8) -> Vec<BucketKey> {
    let m_max = m_max.min(MAX_MAGNITUDE);
    let mut out = Vec::new();
    for &op in ops {
        if op.has_magnitude() {
            out.extend((1..=m_max).map(|magnitude| BucketKey::RandAug { op, magnitude }));
        } else {
            out.push(BucketKey::RandAug { op, magnitude: 1 });
        }
    }
    out
}

pub fn augmix_buckets(d_max: u8, buckets: usize) -> Vec<BucketKey> {
    (1..=d_max)
        .flat_map(|depth| (1..=buckets as u16).map(move |n| BucketKey::AugMix { depth, n }))
        .collect()
}

pub fn adversarial_buckets(buckets: usize) -> Vec<BucketKey> {
    (1..=buckets as u16)
        .map(|n| BucketKey::Adversarial { n })
        .collect()
}

pub fn mixup_buckets(buckets: usize) -> Vec<BucketKey> {
    (1..=buckets as u16)
        .map(|n| BucketKey::Mixup { n })
        .collect()
}
