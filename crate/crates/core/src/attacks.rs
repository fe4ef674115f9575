//! ℓ∞ projected-gradient attacks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{stack, unstack, Image};
use crate::nn::{Model, Prediction, SoftLabel};
use crate::scalar::Scalar;

pub use crate::augment::bucket::adv_bucket;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub eps_max: f64,
    pub iterations: usize,
    /// Step size is `ε / step_divisor`.
    pub step_divisor: f64,
    pub restarts: usize,
    /// Adds a restart starting from the clean image.
    pub zero_restart: bool,
    pub buckets: usize,
}

impl AttackConfig {
    /// Per-batch training attack: 10 iterations, step ε/4, one random restart.
    pub fn training(eps_max: f64, buckets: usize) -> Self {
        AttackConfig {
            eps_max,
            iterations: 10,
            step_divisor: 4.0,
            restarts: 1,
            zero_restart: false,
            buckets,
        }
    }

    /// Evaluation attack: 50 iterations, 3 random restarts plus the clean start.
    pub fn evaluation(eps: f64) -> Self {
        AttackConfig {
            eps_max: eps,
            iterations: 50,
            step_divisor: 4.0,
            restarts: 3,
            zero_restart: true,
            buckets: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_max > 0.0 && self.eps_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps_max {} outside (0, 1]",
                self.eps_max
            )));
        }
        if self.iterations == 0 || self.restarts == 0 || self.buckets == 0 {
            return Err(Error::InvalidConfig(
                "attack iterations, restarts and buckets must be >= 1".into(),
            ));
        }
        if !(self.step_divisor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step divisor {}",
                self.step_divisor
            )));
        }
        Ok(())
    }
}

/// ε ~ U(0, eps_max].
pub fn sample_eps<R: Rng + ?Sized>(rng: &mut R, eps_max: f64) -> Result<f64> {
    if !(eps_max > 0.0) {
        return Err(Error::InvalidConfig(format!("eps_max {eps_max} must be > 0")));
    }
    // random() is in [0, 1); flip it onto (0, 1]
    let u: f64 = rng.random();
    Ok(eps_max * (1.0 - u))
}

/// Attacked batch. Samples whose gradient went non-finite are returned
/// unattacked and listed in `skipped`.
#[derive(Debug, Clone)]
pub struct AttackOutcome<T> {
    pub images: Vec<Image<T>>,
    pub skipped: Vec<usize>,
}

fn true_class_loss(p: &Prediction, y: usize) -> f64 {
    -p.probabilities[y].max(1e-12).ln()
}

/// PGD on a batch with a per-sample radius `eps[i]`.
///
/// Each restart starts from `x + U(−ε, ε)` (or from `x` for the optional
/// clean restart), takes sign-gradient ascent steps on the one-hot
/// cross-entropy and projects back onto the ε-ball and `[0,1]`. The iterate
/// with the highest loss across all restarts is returned per sample.
pub fn pgd_attack_batch<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    images: &[Image<T>],
    labels: &[usize],
    eps: &[f64],
    config: &AttackConfig,
    rng: &mut R,
) -> Result<AttackOutcome<T>> {
    if images.len() != labels.len() || images.len() != eps.len() {
        return Err(Error::RejectedInput(format!(
            "{} images, {} labels, {} radii",
            images.len(),
            labels.len(),
            eps.len()
        )));
    }
    if images.is_empty() {
        return Ok(AttackOutcome {
            images: Vec::new(),
            skipped: Vec::new(),
        });
    }
    if config.iterations == 0 || !(config.step_divisor > 0.0) {
        return Err(Error::InvalidConfig("attack needs iterations and a step".into()));
    }
    let k = model.num_classes();
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidLabel(format!("class {y} for a {k}-class model")));
    }
    if let Some(&e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidConfig(format!("attack radius {e} must be > 0")));
    }
    let refs: Vec<&Image<T>> = images.iter().collect();
    let clean = stack(&refs)?;
    if clean.data().iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
        return Err(Error::RejectedInput("attack input outside [0,1]".into()));
    }
    let b = images.len();
    let per = clean.len() / b;
    let targets: Vec<SoftLabel> = labels.iter().map(|&y| SoftLabel::one_hot(y, k)).collect();

    // per-coordinate bounds of the feasible set
    let mut lo = clean.clone();
    let mut hi = clean.clone();
    for i in 0..b {
        let e = T::of(eps[i]);
        for j in i * per..(i + 1) * per {
            let v = clean.data()[j];
            lo.data_mut()[j] = (v - e).max(T::zero());
            hi.data_mut()[j] = (v + e).min(T::one());
        }
    }

    let mut best = clean.clone();
    let mut best_loss = vec![f64::NEG_INFINITY; b];
    let mut failed = vec![false; b];
    let mut consider = |x: &crate::nn::Tensor<T>, preds: &[Prediction], failed: &[bool]| {
        for i in 0..b {
            let l = true_class_loss(&preds[i], labels[i]);
            if !failed[i] && l > best_loss[i] {
                best_loss[i] = l;
                best.data_mut()[i * per..(i + 1) * per]
                    .copy_from_slice(&x.data()[i * per..(i + 1) * per]);
            }
        }
    };

    let starts = config.restarts + usize::from(config.zero_restart);
    for r in 0..starts {
        let mut x = clean.clone();
        if !(config.zero_restart && r == 0) {
            for i in 0..b {
                for j in i * per..(i + 1) * per {
                    let noise = T::of(rng.random_range(-eps[i]..=eps[i]));
                    x.data_mut()[j] = (clean.data()[j] + noise).max(lo.data()[j]).min(hi.data()[j]);
                }
            }
        }
        for _ in 0..config.iterations {
            let g = model.input_gradients(&x, &targets)?;
            consider(&x, &g.predictions, &failed);
            let grad = g.input.expect("input gradient requested");
            for i in 0..b {
                let gi = &grad.data()[i * per..(i + 1) * per];
                if gi.iter().any(|v| !v.is_finite()) {
                    failed[i] = true;
                    continue;
                }
                let step = T::of(eps[i] / config.step_divisor);
                for (j, &gv) in (i * per..(i + 1) * per).zip(gi) {
                    let s = if gv > T::zero() {
                        step
                    } else if gv < T::zero() {
                        -step
                    } else {
                        T::zero()
                    };
                    x.data_mut()[j] = (x.data()[j] + s).max(lo.data()[j]).min(hi.data()[j]);
                }
            }
        }
        let preds = model.predict_batch(&x)?;
        consider(&x, &preds, &failed);
    }

    let mut out = unstack(&best)?;
    let mut skipped = Vec::new();
    for i in 0..b {
        if failed[i] || !best_loss[i].is_finite() {
            out[i] = images[i].clone();
            skipped.push(i);
        }
    }
    Ok(AttackOutcome {
        images: out,
        skipped,
    })
}

/// Single-sample PGD; a non-finite gradient is reported as an error.
pub fn pgd_attack<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    x: &Image<T>,
    y: usize,
    eps: f64,
    config: &AttackConfig,
    rng: &mut R,
) -> Result<Image<T>> {
    let mut out = pgd_attack_batch(model, std::slice::from_ref(x), &[y], &[eps], config, rng)?;
    if !out.skipped.is_empty() {
        return Err(Error::NonFinite("attack gradient".into()));
    }
    Ok(out.images.pop().expect("one image"))
}
