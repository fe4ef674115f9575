//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use autolabel::attacks::{pgd_attack_batch, AttackConfig};
use autolabel::calibration::CalibrationReport;
use autolabel::image::{stack, Image};
use autolabel::nn::{conv_layers, mlp_layers, Model, Prediction, SoftLabel, Tensor};
use autolabel::rng::stream;
use rand::Rng;

/// Mean soft cross-entropy computed straight from logits with log-sum-exp.
pub fn reference_loss(logits: &Tensor<f64>, targets: &[SoftLabel]) -> f64 {
    let k = logits.shape()[1];
    let mut total = 0.0;
    for (row, t) in logits.data().chunks(k).zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += row
            .iter()
            .zip(t.probs())
            .map(|(z, q)| q * (lse - z))
            .sum::<f64>();
    }
    total / targets.len() as f64
}

pub fn random_soft_label<R: Rng>(rng: &mut R, k: usize) -> SoftLabel {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    SoftLabel::new(w.into_iter().map(|v| v / s).collect()).unwrap()
}

pub fn random_batch<R: Rng>(rng: &mut R, b: usize, shape: [usize; 3]) -> Tensor<f64> {
    let n = b * shape.iter().product::<usize>();
    Tensor::new(
        vec![b, shape[0], shape[1], shape[2]],
        (0..n).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap()
}

/// A small dense or convolutional classifier drawn from `seed`.
pub fn random_model(seed: u64) -> Model<f64> {
    let mut rng = stream(&[seed, 0xF1]);
    let classes = rng.random_range(2..=5);
    if rng.random_bool(0.5) {
        let shape = [rng.random_range(1..=2), rng.random_range(2..=4), rng.random_range(2..=4)];
        let depth = rng.random_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(3..=6)).collect();
        Model::new(shape, mlp_layers(shape, &hidden, classes), &mut rng).unwrap()
    } else {
        let shape = [rng.random_range(1..=2), 4, 4];
        let channels: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=3)).collect();
        let dense = if rng.random_bool(0.5) { rng.random_range(3..=5) } else { 0 };
        Model::new(shape, conv_layers(shape, &channels, dense, classes), &mut rng).unwrap()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheck {
    fn absorb(&mut self, other: GradCheck) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }
}

const FD_STEP: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central differences for every parameter and every input coordinate.
/// Coordinates whose ±h probes change the ReLU/pool pattern are skipped.
pub fn gradient_check(seed: u64) -> GradCheck {
    let model = random_model(seed);
    let mut rng = stream(&[seed, 0xF2]);
    let b = rng.random_range(1..=3);
    let batch = random_batch(&mut rng, b, model.input_shape());
    let k = model.num_classes();
    let targets: Vec<SoftLabel> = (0..b).map(|_| random_soft_label(&mut rng, k)).collect();
    let analytic = model.gradients(&batch, &targets, true).unwrap();
    let base_sig = model.piecewise_signature(&batch).unwrap();
    let loss_at = |m: &Model<f64>, x: &Tensor<f64>| reference_loss(&m.logits(x).unwrap(), &targets);

    let mut out = GradCheck::default();
    let mut probe = model.clone();
    for p in 0..model.params().len() {
        for j in 0..model.params()[p].len() {
            let orig = model.params()[p].data()[j];
            probe.params_mut()[p].data_mut()[j] = orig + FD_STEP;
            let same_hi = probe.piecewise_signature(&batch).unwrap() == base_sig;
            let up = loss_at(&probe, &batch);
            probe.params_mut()[p].data_mut()[j] = orig - FD_STEP;
            let same_lo = probe.piecewise_signature(&batch).unwrap() == base_sig;
            let down = loss_at(&probe, &batch);
            probe.params_mut()[p].data_mut()[j] = orig;
            if !(same_hi && same_lo) {
                out.skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            out.max_rel_err = out.max_rel_err.max(rel_err(analytic.params[p].data()[j], numeric));
            out.checked += 1;
        }
    }
    let input_grad = analytic.input.expect("input gradient");
    let mut x = batch.clone();
    for j in 0..batch.len() {
        let orig = batch.data()[j];
        x.data_mut()[j] = orig + FD_STEP;
        let same_hi = model.piecewise_signature(&x).unwrap() == base_sig;
        let up = loss_at(&model, &x);
        x.data_mut()[j] = orig - FD_STEP;
        let same_lo = model.piecewise_signature(&x).unwrap() == base_sig;
        let down = loss_at(&model, &x);
        x.data_mut()[j] = orig;
        if !(same_hi && same_lo) {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        out.max_rel_err = out.max_rel_err.max(rel_err(input_grad.data()[j], numeric));
        out.checked += 1;
    }
    out
}

pub fn gradient_check_many(seeds: std::ops::Range<u64>) -> GradCheck {
    let mut total = GradCheck::default();
    for s in seeds {
        total.absorb(gradient_check(s));
    }
    total
}

/// Two-loop ECE: for each bin scan every sample.
pub fn naive_ece(conf: &[f64], correct: &[bool], bins: usize) -> (f64, f64, f64) {
    let m = conf.len() as f64;
    let mut ece = 0.0;
    for r in 1..=bins {
        let lo = (r - 1) as f64 / bins as f64;
        let hi = r as f64 / bins as f64;
        let (mut n, mut hits, mut csum) = (0usize, 0usize, 0.0);
        for (i, &c) in conf.iter().enumerate() {
            let inside = if r == 1 { c <= hi } else { c > lo && c <= hi };
            if inside {
                n += 1;
                hits += usize::from(correct[i]);
                csum += c;
            }
        }
        if n > 0 {
            ece += n as f64 / m * (hits as f64 / n as f64 - csum / n as f64).abs();
        }
    }
    let acc = correct.iter().filter(|&&c| c).count() as f64 / m;
    let mean_conf = conf.iter().sum::<f64>() / m;
    (ece, acc, mean_conf)
}

/// A random prediction set, with some confidences placed exactly on bin edges.
pub fn random_predictions(seed: u64, bins: usize) -> (Vec<Prediction>, Vec<usize>) {
    let mut rng = stream(&[seed, 0xEC]);
    let n = rng.random_range(1..=300);
    let k = rng.random_range(2..=10);
    let mut preds = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let p = if rng.random_bool(0.1) {
            // confidence exactly r/R with the rest spread below it
            let r = rng.random_range(1..=bins);
            let top = r as f64 / bins as f64;
            let mut v = vec![0.0; k];
            if top * k as f64 > 1.0 && top < 1.0 {
                v.fill((1.0 - top) / (k - 1) as f64);
                v[rng.random_range(0..k)] = top;
            } else {
                v[0] = 1.0;
            }
            Prediction::from_probabilities(v)
        } else {
            let scale = rng.random_range(0.1..8.0);
            let z: Vec<f64> = (0..k).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            Prediction::from_logits(&z)
        };
        labels.push(rng.random_range(0..p.probabilities.len()));
        preds.push(p);
    }
    (preds, labels)
}

pub fn report(ece: f64, accuracy: f64, confidence: f64) -> CalibrationReport {
    CalibrationReport {
        ece,
        accuracy,
        mean_confidence: confidence,
        bins: Vec::new(),
        samples: 1,
    }
}

/// Smallest `n ≥ 1` with `p/q ≤ n/N`, in integers.
pub fn ceil_ratio_bucket(p: u64, q: u64, buckets: u64) -> u64 {
    ((p * buckets).div_ceil(q)).max(1)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PgdCheck {
    pub attacks: usize,
    pub max_excess: f64,
    pub out_of_range: usize,
    pub loss_regressions: usize,
    pub skipped: usize,
}

fn one_hot_loss(model: &Model<f64>, images: &[Image<f64>], labels: &[usize]) -> Vec<f64> {
    let refs: Vec<&Image<f64>> = images.iter().collect();
    let logits = model.logits(&stack(&refs).unwrap()).unwrap();
    let k = model.num_classes();
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| reference_loss(&Tensor::new(vec![1, k], logits.data()[i * k..(i + 1) * k].to_vec()).unwrap(), &[SoftLabel::one_hot(y, k)]))
        .collect()
}

/// Runs `attacks` PGD attacks on random models/images (8 per model) and
/// tallies contract violations against an independent loss.
pub fn pgd_contract(seed: u64, attacks: usize) -> PgdCheck {
    let mut out = PgdCheck::default();
    let mut m = 0u64;
    while out.attacks < attacks {
        let model = random_model(seed.wrapping_mul(7919).wrapping_add(m));
        let mut rng = stream(&[seed, 0xAD, m]);
        m += 1;
        let b = 8.min(attacks - out.attacks);
        let shape = model.input_shape();
        let images: Vec<Image<f64>> = (0..b)
            .map(|_| {
                let n = shape.iter().product();
                let data = (0..n)
                    .map(|_| match rng.random_range(0..6) {
                        0 => 0.0,
                        1 => 1.0,
                        _ => rng.random::<f64>(),
                    })
                    .collect();
                Image::new(shape[0], shape[1], shape[2], data).unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..model.num_classes())).collect();
        let eps: Vec<f64> = (0..b).map(|_| rng.random_range(0.001..0.3)).collect();
        let cfg = AttackConfig {
            eps_max: 0.3,
            iterations: rng.random_range(1..=8),
            step_divisor: 4.0,
            restarts: rng.random_range(1..=2),
            zero_restart: true,
            buckets: 1,
        };
        let adv = pgd_attack_batch(&model, &images, &labels, &eps, &cfg, &mut rng).unwrap();
        let clean_loss = one_hot_loss(&model, &images, &labels);
        let adv_loss = one_hot_loss(&model, &adv.images, &labels);
        for i in 0..b {
            let delta = adv.images[i].max_abs_diff(&images[i]);
            out.max_excess = out.max_excess.max(delta - eps[i]);
            if !adv.images[i].in_unit_range() {
                out.out_of_range += 1;
            }
            if adv_loss[i] < clean_loss[i] - 1e-9 * clean_loss[i].abs().max(1.0) {
                out.loss_regressions += 1;
            }
        }
        out.skipped += adv.skipped.len();
        out.attacks += b;
    }
    out
}
