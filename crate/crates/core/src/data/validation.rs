//! Per-bucket augmented validation sets.

use rand::seq::index;
use rand::Rng;

use crate::attacks::{pgd_attack_batch, AttackConfig};
use crate::augment::{
    apply_augmix, apply_randaug_op, sample_chain, AugMixParams, AugmentSettings, BucketKey,
    Family, RandAugParams,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::scalar::Scalar;

/// Distance interval `(lo, hi]` covered by a continuous-family bucket.
///
/// AugMix covers λ, adversarial covers ε, mixup covers the minor weight γ′.
/// RandAug buckets are exact and have no interval.
pub fn bucket_interval(bucket: &BucketKey, settings: &AugmentSettings) -> Option<(f64, f64)> {
    let n_total = settings.buckets as f64;
    let edges = |n: u16, max: f64| (max * ((n - 1) as f64 / n_total), max * (n as f64 / n_total));
    match *bucket {
        BucketKey::RandAug { .. } => None,
        BucketKey::AugMix { n, .. } => Some(edges(n, 1.0)),
        BucketKey::Adversarial { n } => Some(edges(n, settings.eps_max)),
        BucketKey::Mixup { n } => Some(edges(n, 0.5)),
    }
}

/// Uniform draw from `(lo, hi]`.
pub fn sample_interval<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (hi - (hi - lo) * u).max(lo)
}

fn check_bucket(bucket: &BucketKey, settings: &AugmentSettings) -> Result<()> {
    if Family::of(bucket) != settings.family {
        return Err(Error::InvalidConfig(format!(
            "bucket {bucket} does not belong to family {}",
            settings.family
        )));
    }
    let n_ok = |n: u16| n >= 1 && n as usize <= settings.buckets;
    let ok = match *bucket {
        BucketKey::RandAug { op, magnitude } => {
            settings.ops.contains(&op) && RandAugParams::new(op, magnitude, false)?.magnitude == magnitude
        }
        BucketKey::AugMix { depth, n } => depth >= 1 && depth <= settings.d_max && n_ok(n),
        BucketKey::Adversarial { n } | BucketKey::Mixup { n } => n_ok(n),
    };
    if !ok {
        return Err(Error::InvalidBucket(bucket.to_string()));
    }
    Ok(())
}

/// Builds `Q(S_n)`: each (sub)sampled validation image augmented once with a
/// distance drawn uniformly inside the bucket. Adversarial buckets need the
/// current model.
pub fn build_augmented_validation<T: Scalar, R: Rng + ?Sized>(
    val: &Dataset<T>,
    bucket: &BucketKey,
    settings: &AugmentSettings,
    model: Option<&Model<T>>,
    subsample: Option<usize>,
    rng: &mut R,
) -> Result<Dataset<T>> {
    check_bucket(bucket, settings)?;
    if val.is_empty() {
        return Err(Error::RejectedInput("empty validation set".into()));
    }
    let picked: Vec<usize> = match subsample {
        Some(m) if m < val.len() => index::sample(rng, val.len(), m).into_vec(),
        _ => (0..val.len()).collect(),
    };
    let name = format!("{}/{bucket}", val.name);
    let mut images = Vec::with_capacity(picked.len());
    let mut labels = Vec::with_capacity(picked.len());
    match *bucket {
        BucketKey::RandAug { op, magnitude } => {
            for &i in &picked {
                let params = RandAugParams::new(op, magnitude, rng.random_bool(0.5))?;
                images.push(apply_randaug_op(&val.images()[i], &params)?);
                labels.push(val.labels()[i]);
            }
        }
        BucketKey::AugMix { depth, .. } => {
            let (lo, hi) = bucket_interval(bucket, settings).expect("continuous bucket");
            for &i in &picked {
                let params = AugMixParams {
                    depth,
                    lambda: sample_interval(rng, lo, hi),
                    chain: sample_chain(rng, &settings.ops, depth, settings.augmix_magnitude)?,
                };
                images.push(apply_augmix(&val.images()[i], &params)?);
                labels.push(val.labels()[i]);
            }
        }
        BucketKey::Mixup { .. } => {
            let (lo, hi) = bucket_interval(bucket, settings).expect("continuous bucket");
            for &j in &picked {
                let i = rng.random_range(0..val.len());
                let gamma = sample_interval(rng, lo, hi);
                images.push(val.images()[i].blend(&val.images()[j], gamma)?);
                labels.push(val.labels()[j]);
            }
        }
        BucketKey::Adversarial { .. } => {
            let model = model.ok_or_else(|| {
                Error::InvalidConfig("adversarial validation needs a model".into())
            })?;
            let (lo, hi) = bucket_interval(bucket, settings).expect("continuous bucket");
            let eps: Vec<f64> = picked.iter().map(|_| sample_interval(rng, lo, hi)).collect();
            let clean: Vec<_> = picked.iter().map(|&i| val.images()[i].clone()).collect();
            labels = picked.iter().map(|&i| val.labels()[i]).collect();
            let cfg = AttackConfig::training(settings.eps_max, settings.buckets);
            images = pgd_attack_batch(model, &clean, &labels, &eps, &cfg, rng)?.images;
        }
    }
    Dataset::new(name, images, labels, val.num_classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{adv_bucket, augmix_bucket, mixup_bucket, OpType};
    use crate::image::Image;
    use crate::rng::stream;

    fn val() -> Dataset<f64> {
        let images = (0..20)
            .map(|k| Image::new(1, 4, 4, (0..16).map(|i| ((i + k) % 16) as f64 / 15.0).collect()).unwrap())
            .collect();
        Dataset::new("v", images, (0..20).map(|i| i % 4).collect(), 4).unwrap()
    }

    #[test]
    fn full_range_autocontrast_is_identity() {
        let mut s = AugmentSettings::new(Family::RandAug);
        s.ops = vec![OpType::AutoContrast];
        let key = BucketKey::RandAug {
            op: OpType::AutoContrast,
            magnitude: 1,
        };
        let v = val();
        let q = build_augmented_validation(&v, &key, &s, None, None, &mut stream(&[1])).unwrap();
        assert_eq!(q.images(), v.images());
        assert_eq!(q.labels(), v.labels());
    }

    #[test]
    fn draws_stay_inside_their_bucket() {
        let mut rng = stream(&[2]);
        let mut s = AugmentSettings::new(Family::AugMix);
        s.buckets = 5;
        for n in 1..=5u16 {
            let key = BucketKey::AugMix { depth: 1, n };
            let (lo, hi) = bucket_interval(&key, &s).unwrap();
            for _ in 0..1000 {
                let l = sample_interval(&mut rng, lo, hi);
                assert!(l > lo && l <= hi);
                assert_eq!(augmix_bucket(1, l, 5), key);
            }
        }
        s.family = Family::Mixup;
        for n in 1..=5u16 {
            let key = BucketKey::Mixup { n };
            let (lo, hi) = bucket_interval(&key, &s).unwrap();
            for _ in 0..1000 {
                assert_eq!(mixup_bucket(sample_interval(&mut rng, lo, hi), 5), key);
            }
        }
        s.family = Family::Adversarial;
        s.buckets = 10;
        s.eps_max = 0.01;
        for n in 1..=10u16 {
            let key = BucketKey::Adversarial { n };
            let (lo, hi) = bucket_interval(&key, &s).unwrap();
            for _ in 0..1000 {
                assert_eq!(adv_bucket(sample_interval(&mut rng, lo, hi), 0.01, 10).unwrap(), key);
            }
        }
    }

    #[test]
    fn adversarial_norms_are_bounded() {
        let mut s = AugmentSettings::new(Family::Adversarial);
        s.eps_max = 0.01;
        let model = Model::mlp([1, 4, 4], &[6], 4, &mut stream(&[3])).unwrap();
        let v = val();
        for n in [1u16, 4, 10] {
            let key = BucketKey::Adversarial { n };
            let q = build_augmented_validation(&v, &key, &s, Some(&model), Some(8), &mut stream(&[n as u64]))
                .unwrap();
            assert_eq!(q.len(), 8);
            for im in q.images() {
                let d = v
                    .images()
                    .iter()
                    .map(|x| im.max_abs_diff(x))
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= n as f64 * 0.001 + 1e-7);
            }
        }
        let key = BucketKey::Adversarial { n: 1 };
        assert!(build_augmented_validation(&v, &key, &s, None, None, &mut stream(&[0])).is_err());
    }

    #[test]
    fn family_and_range_checks() {
        let s = AugmentSettings::new(Family::Mixup);
        let v = val();
        let mut rng = stream(&[4]);
        assert!(matches!(
            build_augmented_validation(&v, &BucketKey::Adversarial { n: 1 }, &s, None, None, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            build_augmented_validation(&v, &BucketKey::Mixup { n: 11 }, &s, None, None, &mut rng),
            Err(Error::InvalidBucket(_))
        ));
        let q = build_augmented_validation(&v, &BucketKey::Mixup { n: 3 }, &s, None, Some(5), &mut rng)
            .unwrap();
        assert_eq!(q.len(), 5);
        assert!(q.images().iter().all(Image::in_unit_range));
    }
}
