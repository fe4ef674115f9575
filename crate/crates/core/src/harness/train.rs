//! The training loop with epoch-boundary label updates.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{adv_bucket, pgd_attack_batch, sample_eps};
use crate::augment::{
    augmix, mixup, mixup_bucket, sample_mixup_pair, sample_randaug, AugmentSettings, BucketKey,
    Family,
};
use crate::calibration::{calibration_report, CalibrationReport, CorruptedSummary};
use crate::data::{build_augmented_validation, load_dataset, split_train_val, Dataset};
use crate::error::{Error, Result};
use crate::harness::config::{Arch, TrainConfig};
use crate::harness::eval::{
    evaluate, evaluate_adversarial, evaluate_corrupted, predict_all, CorruptionCell,
};
use crate::image::{stack, Image};
use crate::labels::{baseline_label, init_label_table, LabelMode, LabelTable, UpdateRecord};
use crate::nn::{step_decay_lr, Model, Prediction, Sgd, SoftLabel};
use crate::rng::{derive_seed, purpose, stream};
use crate::scalar::Scalar;

/// Train, validation and test splits of one run.
#[derive(Debug, Clone)]
pub struct DataSplits<T> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
}

pub fn prepare_data<T: Scalar>(cfg: &TrainConfig) -> Result<DataSplits<T>> {
    let full = load_dataset::<T>(&cfg.data_source()?)?;
    let (rest, test) = split_train_val(&full, cfg.data.test_size, derive_seed(&[cfg.seed, purpose::SPLIT, 1]))?;
    let (train, val) = split_train_val(&rest, cfg.data.val_size, derive_seed(&[cfg.seed, purpose::SPLIT, 2]))?;
    Ok(DataSplits { train, val, test })
}

pub fn build_model<T: Scalar>(cfg: &TrainConfig, shape: [usize; 3], classes: usize) -> Result<Model<T>> {
    let mut rng = stream(&[cfg.seed, purpose::INIT]);
    match cfg.model.arch {
        Arch::Conv => {
            let dense = cfg.model.hidden.first().copied().unwrap_or(0);
            if cfg.model.hidden.len() > 1 {
                return Err(Error::InvalidConfig("conv models take at most one hidden layer".into()));
            }
            Model::conv_net(shape, &cfg.model.channels, dense, classes, &mut rng)
        }
        Arch::Mlp => Model::mlp(shape, &cfg.model.hidden, classes, &mut rng),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub family: String,
    pub bucket: String,
    pub y_true_conf: f64,
}

pub fn snapshot(table: &LabelTable) -> Vec<LabelEntry> {
    table
        .entries()
        .map(|(k, v)| LabelEntry {
            family: k.family().to_string(),
            bucket: k.coords(),
            y_true_conf: v,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketUpdate {
    pub bucket: BucketKey,
    pub samples: usize,
    #[serde(flatten)]
    pub record: UpdateRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based number of the completed epoch.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_ece: f64,
    pub skipped_attacks: usize,
    pub bucket_updates: Vec<BucketUpdate>,
    /// Table after this epoch's updates.
    pub labels: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub clean: CalibrationReport,
    pub corrupted: Option<CorruptedSummary>,
    pub corruption_cells: Vec<CorruptionCell>,
    pub adversarial_accuracy: Option<f64>,
    /// `(clean + adversarial) − (baseline clean + baseline adversarial)`, as fractions.
    pub accuracy_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub scalar: String,
    pub param_count: usize,
    pub train_samples: usize,
    pub initial_labels: Vec<LabelEntry>,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: Option<FinalMetrics>,
    /// Set when a non-finite loss or update stopped the run.
    pub aborted: Option<String>,
}

pub struct RunOutcome<T> {
    pub report: RunReport,
    pub model: Model<T>,
    pub table: Option<LabelTable>,
}

/// Replacement for the model's predictions on augmented validation sets.
pub type ValidationOracle<'a, T> = dyn Fn(&BucketKey, &Dataset<T>) -> Result<Vec<Prediction>> + 'a;

pub struct Hooks<'a, T> {
    pub validation: Option<Box<ValidationOracle<'a, T>>>,
    pub on_epoch: Option<Box<dyn FnMut(&EpochRecord) + 'a>>,
}

impl<T> Default for Hooks<'_, T> {
    fn default() -> Self {
        Hooks {
            validation: None,
            on_epoch: None,
        }
    }
}

pub fn run_training<T: Scalar>(cfg: &TrainConfig) -> Result<RunOutcome<T>> {
    let data = prepare_data(cfg)?;
    run_training_with(cfg, &data, Hooks::default())
}

struct Batch<T> {
    images: Vec<Image<T>>,
    targets: Vec<SoftLabel>,
    skipped: usize,
}

struct Trainer<'c, T> {
    cfg: &'c TrainConfig,
    settings: Option<AugmentSettings>,
    classes: usize,
    table: Option<LabelTable>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> Trainer<'_, T> {
    fn clean_label(&self, y: usize) -> Result<SoftLabel> {
        match self.cfg.label.mode {
            LabelMode::Autolabel => Ok(SoftLabel::one_hot(y, self.classes)),
            _ => baseline_label(&self.cfg.baseline(), y, self.classes, 0.0, self.cfg.attack.eps_max),
        }
    }

    fn bucket_label(&self, key: &BucketKey, y: usize) -> Result<SoftLabel> {
        match &self.table {
            Some(t) if self.cfg.label.mode == LabelMode::Autolabel => t.soft_label(key, y),
            _ => self.clean_label(y),
        }
    }

    fn make_batch<R: Rng + ?Sized>(
        &self,
        model: &Model<T>,
        train: &Dataset<T>,
        idx: &[usize],
        rng: &mut R,
    ) -> Result<Batch<T>> {
        let clean_frac = self.cfg.train.include_clean_fraction;
        let keep_clean: Vec<bool> = idx
            .iter()
            .map(|_| clean_frac > 0.0 && rng.random::<f64>() < clean_frac)
            .collect();
        let mut images = Vec::with_capacity(idx.len());
        let mut targets = Vec::with_capacity(idx.len());
        let mut skipped = 0;
        let Some(settings) = &self.settings else {
            for &i in idx {
                images.push(train.images()[i].clone());
                targets.push(self.clean_label(train.labels()[i])?);
            }
            return Ok(Batch { images, targets, skipped });
        };
        if settings.family == Family::Adversarial {
            let attacked: Vec<usize> = (0..idx.len()).filter(|&p| !keep_clean[p]).collect();
            let eps: Vec<f64> = attacked
                .iter()
                .map(|_| sample_eps(rng, settings.eps_max))
                .collect::<Result<_>>()?;
            let src: Vec<Image<T>> = attacked.iter().map(|&p| train.images()[idx[p]].clone()).collect();
            let ys: Vec<usize> = attacked.iter().map(|&p| train.labels()[idx[p]]).collect();
            let out = pgd_attack_batch(model, &src, &ys, &eps, &self.cfg.train_attack(), rng)?;
            skipped = out.skipped.len();
            let mut adv = out.images.into_iter();
            let mut a = 0;
            for (p, &i) in idx.iter().enumerate() {
                let y = train.labels()[i];
                if keep_clean[p] {
                    images.push(train.images()[i].clone());
                    targets.push(self.clean_label(y)?);
                    continue;
                }
                let img = adv.next().expect("one output per attacked sample");
                let label = if out.skipped.contains(&a) {
                    self.clean_label(y)?
                } else if self.cfg.label.mode == LabelMode::Ccat {
                    let delta = img.max_abs_diff(&train.images()[i]);
                    baseline_label(&self.cfg.baseline(), y, self.classes, delta, settings.eps_max)?
                } else {
                    self.bucket_label(&adv_bucket(eps[a], settings.eps_max, settings.buckets)?, y)?
                };
                images.push(img);
                targets.push(label);
                a += 1;
            }
            return Ok(Batch { images, targets, skipped });
        }
        for (p, &i) in idx.iter().enumerate() {
            let x = &train.images()[i];
            let y = train.labels()[i];
            if keep_clean[p] {
                images.push(x.clone());
                targets.push(self.clean_label(y)?);
                continue;
            }
            match settings.family {
                Family::RandAug => {
                    let (img, _, key) = sample_randaug(x, rng, &settings.ops, settings.m_max)?;
                    images.push(img);
                    targets.push(self.bucket_label(&key, y)?);
                }
                Family::AugMix => {
                    let (img, _, key) = augmix(
                        x,
                        rng,
                        &settings.ops,
                        settings.d_max,
                        settings.augmix_magnitude,
                        settings.buckets,
                    )?;
                    images.push(img);
                    targets.push(self.bucket_label(&key, y)?);
                }
                Family::Mixup => {
                    let pair = sample_mixup_pair(rng, settings.mixup_beta, train.len())?;
                    let j = pair.partner_index;
                    let yj = train.labels()[j];
                    let (img, key) = mixup(x, &train.images()[j], &pair, settings.buckets)?;
                    debug_assert_eq!(key, mixup_bucket(pair.gamma, settings.buckets));
                    let label = match &self.table {
                        Some(t) if self.cfg.label.mode == LabelMode::Autolabel => {
                            // the sample with the larger weight is the dominant one
                            if pair.gamma <= 0.5 {
                                t.mixup_soft_label(&key, y, yj, pair.gamma)?
                            } else {
                                t.mixup_soft_label(&key, yj, y, 1.0 - pair.gamma)?
                            }
                        }
                        _ => {
                            let a = self.clean_label(y)?;
                            let b = self.clean_label(yj)?;
                            let g = pair.gamma;
                            SoftLabel::new(
                                a.probs()
                                    .iter()
                                    .zip(b.probs())
                                    .map(|(p, q)| g * p + (1.0 - g) * q)
                                    .collect(),
                            )?
                        }
                    };
                    images.push(img);
                    targets.push(label);
                }
                Family::Adversarial => unreachable!("handled above"),
            }
        }
        Ok(Batch { images, targets, skipped })
    }
}

/// Runs training on prepared splits. Hooks may replace validation
/// predictions and observe each finished epoch.
pub fn run_training_with<T: Scalar>(
    cfg: &TrainConfig,
    data: &DataSplits<T>,
    mut hooks: Hooks<'_, T>,
) -> Result<RunOutcome<T>> {
    cfg.validate()?;
    let shape = data
        .train
        .image_shape()
        .ok_or_else(|| Error::RejectedInput("empty training set".into()))?;
    let classes = data.train.num_classes();
    let mut model: Model<T> = build_model(cfg, shape, classes)?;
    let settings = cfg.augment_settings();
    let buckets: Vec<BucketKey> = settings.as_ref().map(|s| s.all_buckets()).unwrap_or_default();
    let table = if buckets.is_empty() {
        None
    } else {
        Some(init_label_table(classes, &buckets, cfg.label.alpha)?)
    };
    let mut trainer = Trainer {
        cfg,
        settings,
        classes,
        table,
        _scalar: std::marker::PhantomData,
    };
    let mut report = RunReport {
        config: cfg.clone(),
        scalar: T::NAME.to_string(),
        param_count: model.param_count(),
        train_samples: data.train.len(),
        initial_labels: trainer.table.as_ref().map(snapshot).unwrap_or_default(),
        epochs: Vec::new(),
        final_metrics: None,
        aborted: None,
    };
    let mut sgd = Sgd::new(cfg.train.momentum, cfg.train.weight_decay);
    let bins = cfg.label.ece_bins;
    let subsample = (cfg.label.val_subsample > 0).then_some(cfg.label.val_subsample);

    for epoch in 0..cfg.train.epochs {
        let lr = step_decay_lr(cfg.train.lr, epoch, cfg.train.epochs);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut stream(&[cfg.seed, purpose::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut skipped = 0;
        for (b, idx) in order.chunks(cfg.train.batch_size).enumerate() {
            let mut rng = stream(&[cfg.seed, purpose::TRAIN_SAMPLE, epoch as u64, b as u64]);
            let batch = trainer.make_batch(&model, &data.train, idx, &mut rng)?;
            skipped += batch.skipped;
            let refs: Vec<&Image<T>> = batch.images.iter().collect();
            let grads = model.gradients(&stack(&refs)?, &batch.targets, false)?;
            if !grads.loss.is_finite() {
                report.aborted = Some(format!("non-finite loss in epoch {} batch {b}", epoch + 1));
                break;
            }
            match sgd.step(&mut model, &grads.params, lr) {
                Ok(()) => {}
                Err(Error::NonFinite(m)) => {
                    report.aborted = Some(format!("epoch {} batch {b}: {m}", epoch + 1));
                    break;
                }
                Err(e) => return Err(e),
            }
            loss_sum += grads.loss * idx.len() as f64;
        }
        if report.aborted.is_some() {
            break;
        }

        let val_report = evaluate(&model, &data.val, bins)?;
        let mut updates = Vec::new();
        if cfg.label.mode == LabelMode::Autolabel {
            let settings = trainer.settings.as_ref().expect("autolabel has a family");
            let mut results = Vec::with_capacity(buckets.len());
            for (bi, key) in buckets.iter().enumerate() {
                let mut rng = stream(&[cfg.seed, purpose::VALIDATION, epoch as u64, bi as u64]);
                let q = build_augmented_validation(&data.val, key, settings, Some(&model), subsample, &mut rng)?;
                let preds = match &hooks.validation {
                    Some(oracle) => oracle(key, &q)?,
                    None => predict_all(&model, q.images())?,
                };
                results.push((q.len(), calibration_report(&preds, q.labels(), bins)?));
            }
            let table = trainer.table.as_mut().expect("autolabel has a table");
            for (key, (samples, rep)) in buckets.iter().zip(results) {
                let record = table.update_bucket(key, &rep)?;
                updates.push(BucketUpdate {
                    bucket: *key,
                    samples,
                    record,
                });
            }
        }
        if let Some(t) = trainer.table.as_mut() {
            t.advance_epoch();
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / data.train.len() as f64,
            val_accuracy: val_report.accuracy,
            val_ece: val_report.ece,
            skipped_attacks: skipped,
            bucket_updates: updates,
            labels: trainer.table.as_ref().map(snapshot).unwrap_or_default(),
        };
        if let Some(f) = hooks.on_epoch.as_mut() {
            f(&record);
        }
        report.epochs.push(record);
    }

    if report.aborted.is_none() {
        report.final_metrics = Some(final_metrics(cfg, &model, &data.test)?);
    }
    Ok(RunOutcome {
        report,
        model,
        table: trainer.table,
    })
}

/// Clean, corrupted and adversarial test metrics as configured.
pub fn final_metrics<T: Scalar>(
    cfg: &TrainConfig,
    model: &Model<T>,
    test: &Dataset<T>,
) -> Result<FinalMetrics> {
    let bins = cfg.label.ece_bins;
    let clean = evaluate(model, test, bins)?;
    let (corrupted, corruption_cells) = if cfg.eval.corruption {
        let subset = if cfg.eval.corruption_samples > 0 {
            test.truncated(cfg.eval.corruption_samples)
        } else {
            test.clone()
        };
        let (s, cells) = evaluate_corrupted(model, &subset, bins, cfg.seed)?;
        (Some(s), cells)
    } else {
        (None, Vec::new())
    };
    let adversarial_accuracy = if cfg.eval.adversarial_samples > 0 {
        let subset = test.truncated(cfg.eval.adversarial_samples);
        let mut rng = stream(&[cfg.seed, purpose::ATTACK_EVAL]);
        Some(evaluate_adversarial(model, &subset, &cfg.eval_attack(), &mut rng)?.accuracy)
    } else {
        None
    };
    let accuracy_difference = match (adversarial_accuracy, cfg.eval.baseline_clean, cfg.eval.baseline_adversarial) {
        (Some(adv), Some(bc), Some(ba)) => Some(crate::calibration::accuracy_difference(
            clean.accuracy,
            adv,
            bc,
            ba,
        )),
        _ => None,
    };
    Ok(FinalMetrics {
        clean,
        corrupted,
        corruption_cells,
        adversarial_accuracy,
        accuracy_difference,
    })
}
