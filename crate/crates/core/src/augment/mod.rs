//! Augmentation families and their transformation distances.
//!
//! Every sampler returns the augmented image together with the
//! [`BucketKey`] of the distance it applied.

pub mod bucket;
pub mod ops;
pub mod ppm;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub use bucket::{
    adv_bucket, adversarial_buckets, augmix_bucket, augmix_buckets, ceil_bucket, mixup_bucket,
    mixup_buckets, randaug_buckets, BucketKey,
};
pub use ops::{apply_randaug_op, OpType, RandAugParams, ALL_OPS, MAX_MAGNITUDE, MOTIVATION_OPS};

/// Augmentation family of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    RandAug,
    AugMix,
    Adversarial,
    Mixup,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::RandAug => "randaug",
            Family::AugMix => "augmix",
            Family::Adversarial => "adversarial",
            Family::Mixup => "mixup",
        }
    }

    pub fn of(key: &BucketKey) -> Family {
        match key {
            BucketKey::RandAug { .. } => Family::RandAug,
            BucketKey::AugMix { .. } => Family::AugMix,
            BucketKey::Adversarial { .. } => Family::Adversarial,
            BucketKey::Mixup { .. } => Family::Mixup,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "randaug" => Family::RandAug,
            "augmix" => Family::AugMix,
            "adversarial" => Family::Adversarial,
            "mixup" => Family::Mixup,
            _ => return Err(Error::InvalidConfig(format!("unknown family {s:?}"))),
        })
    }
}

/// Family parameters shared by training-time augmentation and the
/// augmented validation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSettings {
    pub family: Family,
    pub ops: Vec<OpType>,
    pub m_max: u8,
    pub d_max: u8,
    /// Fixed magnitude of AugMix chain operations.
    pub augmix_magnitude: u8,
    /// Bucket count `N` for the continuous families.
    pub buckets: usize,
    pub eps_max: f64,
    pub mixup_beta: f64,
}

impl AugmentSettings {
    pub fn new(family: Family) -> Self {
        AugmentSettings {
            family,
            ops: ALL_OPS.to_vec(),
            m_max: MAX_MAGNITUDE,
            d_max: 3,
            augmix_magnitude: 3,
            buckets: 10,
            eps_max: 0.01,
            mixup_beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.ops.is_empty() && matches!(self.family, Family::RandAug | Family::AugMix) {
            return bad("no augmentation ops".into());
        }
        if self.m_max == 0 || self.m_max > MAX_MAGNITUDE {
            return bad(format!("m_max {} outside 1..={MAX_MAGNITUDE}", self.m_max));
        }
        if self.augmix_magnitude == 0 || self.augmix_magnitude > MAX_MAGNITUDE {
            return bad(format!("augmix magnitude {}", self.augmix_magnitude));
        }
        if self.d_max == 0 {
            return bad("d_max must be >= 1".into());
        }
        if self.buckets == 0 || self.buckets > u16::MAX as usize {
            return bad(format!("bucket count {}", self.buckets));
        }
        if !(self.eps_max > 0.0 && self.eps_max <= 1.0) {
            return bad(format!("eps_max {} outside (0, 1]", self.eps_max));
        }
        if !(self.mixup_beta > 0.0 && self.mixup_beta.is_finite()) {
            return bad(format!("mixup beta {}", self.mixup_beta));
        }
        Ok(())
    }

    /// Every bucket of the configured family.
    pub fn all_buckets(&self) -> Vec<BucketKey> {
        match self.family {
            Family::RandAug => randaug_buckets(&self.ops, self.m_max),
            Family::AugMix => augmix_buckets(self.d_max, self.buckets),
            Family::Adversarial => adversarial_buckets(self.buckets),
            Family::Mixup => mixup_buckets(self.buckets),
        }
    }
}

/// Uniform op from `ops`, uniform magnitude in `1..=m_max`, uniform sign.
pub fn sample_randaug_params<R: Rng + ?Sized>(
    rng: &mut R,
    ops: &[OpType],
    m_max: u8,
) -> Result<RandAugParams> {
    if ops.is_empty() || m_max == 0 || m_max > MAX_MAGNITUDE {
        return Err(Error::InvalidConfig(format!(
            "randaug needs ops and 1 <= m_max <= {MAX_MAGNITUDE}"
        )));
    }
    let op = ops[rng.random_range(0..ops.len())];
    let magnitude = rng.random_range(1..=m_max);
    let negate = rng.random_bool(0.5);
    RandAugParams::new(op, magnitude, negate)
}

pub fn randaug_key(params: &RandAugParams) -> BucketKey {
    BucketKey::RandAug {
        op: params.op,
        magnitude: params.magnitude,
    }
}

/// One RandAug transformation with its bucket `(randaug, type, m)`.
pub fn sample_randaug<T: Scalar, R: Rng + ?Sized>(
    image: &Image<T>,
    rng: &mut R,
    ops: &[OpType],
    m_max: u8,
) -> Result<(Image<T>, RandAugParams, BucketKey)> {
    let params = sample_randaug_params(rng, ops, m_max)?;
    let out = apply_randaug_op(image, &params)?;
    Ok((out, params, randaug_key(&params)))
}

/// A single AugMix chain and its mixing weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugMixParams {
    pub depth: u8,
    /// Weight on the clean image.
    pub lambda: f64,
    pub chain: Vec<RandAugParams>,
}

impl AugMixParams {
    pub fn validate(&self, d_max: u8) -> Result<()> {
        if self.depth == 0 || self.depth > d_max || self.chain.len() != self.depth as usize {
            return Err(Error::InvalidConfig(format!(
                "augmix depth {} with {} chain ops (d_max {d_max})",
                self.depth,
                self.chain.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {}", self.lambda)));
        }
        Ok(())
    }
}

/// Draws `depth` chain operations at a fixed magnitude.
pub fn sample_chain<R: Rng + ?Sized>(
    rng: &mut R,
    ops: &[OpType],
    depth: u8,
    magnitude: u8,
) -> Result<Vec<RandAugParams>> {
    if ops.is_empty() {
        return Err(Error::InvalidConfig("augmix needs at least one op".into()));
    }
    (0..depth)
        .map(|_| {
            let op = ops[rng.random_range(0..ops.len())];
            RandAugParams::new(op, magnitude, rng.random_bool(0.5))
        })
        .collect()
}

/// `λ·x + (1 − λ)·chain(x)`.
pub fn apply_augmix<T: Scalar>(image: &Image<T>, params: &AugMixParams) -> Result<Image<T>> {
    let mut aug = image.clone();
    for op in &params.chain {
        aug = apply_randaug_op(&aug, op)?;
    }
    image.blend(&aug, params.lambda)
}

/// AugMix with one chain: depth uniform in `1..=d_max`, λ ~ U(0, 1).
pub fn augmix<T: Scalar, R: Rng + ?Sized>(
    image: &Image<T>,
    rng: &mut R,
    ops: &[OpType],
    d_max: u8,
    magnitude: u8,
    buckets: usize,
) -> Result<(Image<T>, AugMixParams, BucketKey)> {
    if d_max == 0 {
        return Err(Error::InvalidConfig("d_max must be >= 1".into()));
    }
    let depth = rng.random_range(1..=d_max);
    let chain = sample_chain(rng, ops, depth, magnitude)?;
    let lambda: f64 = rng.random();
    let params = AugMixParams {
        depth,
        lambda,
        chain,
    };
    let out = apply_augmix(image, &params)?;
    let key = augmix_bucket(depth, lambda, buckets);
    Ok((out, params, key))
}

/// Mixing draw for a mixup pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupPair {
    /// Weight on the first sample.
    pub gamma: f64,
    pub beta: f64,
    pub partner_index: usize,
}

/// γ ~ Beta(β, β) and a uniform partner among `population` samples.
pub fn sample_mixup_pair<R: Rng + ?Sized>(
    rng: &mut R,
    beta: f64,
    population: usize,
) -> Result<MixupPair> {
    let dist = Beta::new(beta, beta)
        .map_err(|e| Error::InvalidConfig(format!("mixup beta {beta}: {e}")))?;
    let gamma = dist.sample(rng).clamp(0.0, 1.0);
    let partner_index = rng.random_range(0..population.max(1));
    Ok(MixupPair {
        gamma,
        beta,
        partner_index,
    })
}

/// `γ·x_i + (1 − γ)·x_j` with its bucket.
pub fn mixup<T: Scalar>(
    x_i: &Image<T>,
    x_j: &Image<T>,
    pair: &MixupPair,
    buckets: usize,
) -> Result<(Image<T>, BucketKey)> {
    if !(0.0..=1.0).contains(&pair.gamma) {
        return Err(Error::InvalidConfig(format!("gamma {}", pair.gamma)));
    }
    let out = x_i.blend(x_j, pair.gamma)?;
    Ok((out, mixup_bucket(pair.gamma, buckets)))
}
