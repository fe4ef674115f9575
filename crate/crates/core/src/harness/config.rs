//! Flat `section.key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::augment::{AugmentSettings, Family, OpType, MAX_MAGNITUDE};
use crate::data::{DataSource, SyntheticSpec};
use crate::error::{Error, Result};
use crate::labels::{BaselineConfig, LabelMode};
use crate::rng::derive_seed;

pub const SEED_ENV: &str = "AUTOLABEL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    RandAug,
    AugMix,
    Mixup,
    AdvTraining,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::RandAug => "randaug",
            Method::AugMix => "augmix",
            Method::Mixup => "mixup",
            Method::AdvTraining => "adv_training",
        }
    }

    pub fn family(self) -> Option<Family> {
        match self {
            Method::Vanilla => None,
            Method::RandAug => Some(Family::RandAug),
            Method::AugMix => Some(Family::AugMix),
            Method::Mixup => Some(Family::Mixup),
            Method::AdvTraining => Some(Family::Adversarial),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::Vanilla,
            Method::RandAug,
            Method::AugMix,
            Method::Mixup,
            Method::AdvTraining,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Conv,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// `synthetic`, `idx` or `cifar_binary`.
    pub source: String,
    pub classes: usize,
    pub samples: usize,
    pub size: usize,
    pub channels: usize,
    pub noise: f64,
    pub jitter_degrees: f64,
    pub distractor: f64,
    pub images: String,
    pub labels: String,
    pub files: Vec<String>,
    pub val_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub channels: Vec<usize>,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub include_clean_fraction: f64,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub mode: LabelMode,
    pub alpha: f64,
    /// Label-smoothing mass.
    pub rho: f64,
    /// Exponent of the CCAT power transition.
    pub ccat_rho: f64,
    pub buckets: usize,
    pub ece_bins: usize,
    /// Validation images per bucket and epoch; 0 uses the whole split.
    pub val_subsample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    pub ops: Vec<OpType>,
    pub m_max: u8,
    pub d_max: u8,
    pub augmix_magnitude: u8,
    pub mixup_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSection {
    pub eps_max: f64,
    pub iterations: usize,
    pub step_divisor: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub attack_eps: f64,
    pub attack_iterations: usize,
    pub attack_restarts: usize,
    /// Test images attacked for adversarial accuracy; 0 skips the attack.
    pub adversarial_samples: usize,
    pub corruption: bool,
    /// Test images per corruption cell; 0 uses the whole split.
    pub corruption_samples: usize,
    /// Clean and adversarial accuracy of a reference run, for the accuracy difference.
    pub baseline_clean: Option<f64>,
    pub baseline_adversarial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub out_dir: String,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub label: LabelConfig,
    pub aug: AugConfig,
    pub attack: AttackSection,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            out_dir: String::new(),
            data: DataConfig {
                source: "synthetic".into(),
                classes: 10,
                samples: 10_000,
                size: 16,
                channels: 1,
                noise: 0.1,
                jitter_degrees: 6.0,
                distractor: 0.6,
                images: String::new(),
                labels: String::new(),
                files: Vec::new(),
                val_size: 1000,
                test_size: 1000,
            },
            model: ModelConfig {
                arch: Arch::Conv,
                channels: vec![16, 32],
                hidden: vec![128],
            },
            train: TrainSection {
                method: Method::RandAug,
                epochs: 15,
                batch_size: 64,
                lr: 0.05,
                momentum: 0.9,
                weight_decay: 0.0,
                include_clean_fraction: 0.0,
                precision: Precision::F32,
            },
            label: LabelConfig {
                mode: LabelMode::Autolabel,
                alpha: 0.1,
                rho: 0.1,
                ccat_rho: 10.0,
                buckets: 10,
                ece_bins: 15,
                val_subsample: 200,
            },
            aug: AugConfig {
                ops: crate::augment::ALL_OPS.to_vec(),
                m_max: MAX_MAGNITUDE,
                d_max: 3,
                augmix_magnitude: 3,
                mixup_beta: 1.0,
            },
            attack: AttackSection {
                eps_max: 0.01,
                iterations: 10,
                step_divisor: 4.0,
                restarts: 1,
            },
            eval: EvalConfig {
                attack_eps: 0.03,
                attack_iterations: 50,
                attack_restarts: 3,
                adversarial_samples: 500,
                corruption: true,
                corruption_samples: 0,
                baseline_clean: None,
                baseline_adversarial: None,
            },
        }
    }
}

fn parse_num<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_ops(value: &str) -> Result<Vec<OpType>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn parse_opt(key: &str, value: &str) -> Result<Option<f64>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn join<V: fmt::Display>(items: &[V]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", no + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::InvalidConfig(format!(
                    "line {}: duplicate key {key}",
                    no + 1
                )));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    /// Reads a config file and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse_num(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "out_dir" => self.out_dir = v.to_string(),
            "data.source" => self.data.source = v.to_string(),
            "data.classes" => self.data.classes = parse_num(key, v)?,
            "data.samples" => self.data.samples = parse_num(key, v)?,
            "data.size" => self.data.size = parse_num(key, v)?,
            "data.channels" => self.data.channels = parse_num(key, v)?,
            "data.noise" => self.data.noise = parse_num(key, v)?,
            "data.jitter_degrees" => self.data.jitter_degrees = parse_num(key, v)?,
            "data.distractor" => self.data.distractor = parse_num(key, v)?,
            "data.images" => self.data.images = v.to_string(),
            "data.labels" => self.data.labels = v.to_string(),
            "data.files" => self.data.files = parse_list(key, v)?,
            "data.val_size" => self.data.val_size = parse_num(key, v)?,
            "data.test_size" => self.data.test_size = parse_num(key, v)?,
            "model.arch" => {
                self.model.arch = match v {
                    "conv" => Arch::Conv,
                    "mlp" => Arch::Mlp,
                    _ => return Err(Error::InvalidConfig(format!("unknown arch {v:?}"))),
                }
            }
            "model.channels" => self.model.channels = parse_list(key, v)?,
            "model.hidden" => self.model.hidden = parse_list(key, v)?,
            "train.method" => self.train.method = v.parse()?,
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.lr" => self.train.lr = parse_num(key, v)?,
            "train.momentum" => self.train.momentum = parse_num(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse_num(key, v)?,
            "train.include_clean_fraction" => self.train.include_clean_fraction = parse_num(key, v)?,
            "train.precision" => {
                self.train.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::InvalidConfig(format!("unknown precision {v:?}"))),
                }
            }
            "label.mode" => self.label.mode = v.parse()?,
            "label.alpha" => self.label.alpha = parse_num(key, v)?,
            "label.rho" => self.label.rho = parse_num(key, v)?,
            "label.ccat_rho" => self.label.ccat_rho = parse_num(key, v)?,
            "label.buckets" => self.label.buckets = parse_num(key, v)?,
            "label.ece_bins" => self.label.ece_bins = parse_num(key, v)?,
            "label.val_subsample" => self.label.val_subsample = parse_num(key, v)?,
            "aug.ops" => self.aug.ops = parse_ops(v)?,
            "aug.m_max" => self.aug.m_max = parse_num(key, v)?,
            "aug.d_max" => self.aug.d_max = parse_num(key, v)?,
            "aug.augmix_magnitude" => self.aug.augmix_magnitude = parse_num(key, v)?,
            "aug.mixup_beta" => self.aug.mixup_beta = parse_num(key, v)?,
            "attack.eps_max" => self.attack.eps_max = parse_num(key, v)?,
            "attack.iterations" => self.attack.iterations = parse_num(key, v)?,
            "attack.step_divisor" => self.attack.step_divisor = parse_num(key, v)?,
            "attack.restarts" => self.attack.restarts = parse_num(key, v)?,
            "eval.attack_eps" => self.eval.attack_eps = parse_num(key, v)?,
            "eval.attack_iterations" => self.eval.attack_iterations = parse_num(key, v)?,
            "eval.attack_restarts" => self.eval.attack_restarts = parse_num(key, v)?,
            "eval.adversarial_samples" => self.eval.adversarial_samples = parse_num(key, v)?,
            "eval.corruption" => self.eval.corruption = parse_num(key, v)?,
            "eval.corruption_samples" => self.eval.corruption_samples = parse_num(key, v)?,
            "eval.baseline_clean" => self.eval.baseline_clean = parse_opt(key, v)?,
            "eval.baseline_adversarial" => self.eval.baseline_adversarial = parse_opt(key, v)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let t = &self.train;
        let l = &self.label;
        let a = &self.aug;
        let k = &self.attack;
        let e = &self.eval;
        vec![
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.clone()),
            ("data.source", d.source.clone()),
            ("data.classes", d.classes.to_string()),
            ("data.samples", d.samples.to_string()),
            ("data.size", d.size.to_string()),
            ("data.channels", d.channels.to_string()),
            ("data.noise", d.noise.to_string()),
            ("data.jitter_degrees", d.jitter_degrees.to_string()),
            ("data.distractor", d.distractor.to_string()),
            ("data.images", d.images.clone()),
            ("data.labels", d.labels.clone()),
            ("data.files", d.files.join(",")),
            ("data.val_size", d.val_size.to_string()),
            ("data.test_size", d.test_size.to_string()),
            (
                "model.arch",
                match self.model.arch {
                    Arch::Conv => "conv",
                    Arch::Mlp => "mlp",
                }
                .to_string(),
            ),
            ("model.channels", join(&self.model.channels)),
            ("model.hidden", join(&self.model.hidden)),
            ("train.method", t.method.name().to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.momentum", t.momentum.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.include_clean_fraction", t.include_clean_fraction.to_string()),
            (
                "train.precision",
                match t.precision {
                    Precision::F32 => "f32",
                    Precision::F64 => "f64",
                }
                .to_string(),
            ),
            ("label.mode", l.mode.name().to_string()),
            ("label.alpha", l.alpha.to_string()),
            ("label.rho", l.rho.to_string()),
            ("label.ccat_rho", l.ccat_rho.to_string()),
            ("label.buckets", l.buckets.to_string()),
            ("label.ece_bins", l.ece_bins.to_string()),
            ("label.val_subsample", l.val_subsample.to_string()),
            ("aug.ops", join(&a.ops)),
            ("aug.m_max", a.m_max.to_string()),
            ("aug.d_max", a.d_max.to_string()),
            ("aug.augmix_magnitude", a.augmix_magnitude.to_string()),
            ("aug.mixup_beta", a.mixup_beta.to_string()),
            ("attack.eps_max", k.eps_max.to_string()),
            ("attack.iterations", k.iterations.to_string()),
            ("attack.step_divisor", k.step_divisor.to_string()),
            ("attack.restarts", k.restarts.to_string()),
            ("eval.attack_eps", e.attack_eps.to_string()),
            ("eval.attack_iterations", e.attack_iterations.to_string()),
            ("eval.attack_restarts", e.attack_restarts.to_string()),
            ("eval.adversarial_samples", e.adversarial_samples.to_string()),
            ("eval.corruption", e.corruption.to_string()),
            ("eval.corruption_samples", e.corruption_samples.to_string()),
            ("eval.baseline_clean", opt(e.baseline_clean)),
            ("eval.baseline_adversarial", opt(e.baseline_adversarial)),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Rejects out-of-range values and incompatible combinations.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let d = &self.data;
        if d.source == "synthetic" && d.val_size + d.test_size >= d.samples {
            return bad(format!(
                "val_size + test_size ({}) must be below samples ({})",
                d.val_size + d.test_size,
                d.samples
            ));
        }
        if d.val_size == 0 || d.test_size == 0 {
            return bad("val_size and test_size must be >= 1".into());
        }
        self.data_source()?;
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1".into());
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return bad(format!("lr {}", t.lr));
        }
        if !(0.0..1.0).contains(&t.momentum) || !(t.weight_decay >= 0.0) {
            return bad("momentum must be in [0,1) and weight_decay >= 0".into());
        }
        if !(0.0..=1.0).contains(&t.include_clean_fraction) {
            return bad(format!(
                "include_clean_fraction {}",
                t.include_clean_fraction
            ));
        }
        let l = &self.label;
        if l.ece_bins == 0 {
            return bad("ece_bins must be >= 1".into());
        }
        if !(l.alpha >= 0.0 && l.alpha.is_finite()) || !(l.rho >= 0.0) || !(l.ccat_rho >= 0.0) {
            return bad("alpha, rho and ccat_rho must be >= 0".into());
        }
        match (l.mode, t.method) {
            (LabelMode::Autolabel, Method::Vanilla) => {
                return bad("autolabel needs an augmentation family".into())
            }
            (LabelMode::Ccat, m) if m != Method::AdvTraining => {
                return bad("ccat labels need adv_training".into())
            }
            (LabelMode::LabelSmoothing, _) if l.rho >= 1.0 => {
                return bad(format!("label smoothing rho {} must be < 1", l.rho))
            }
            _ => {}
        }
        if let Some(s) = self.augment_settings() {
            s.validate()?;
        }
        if t.method == Method::AdvTraining {
            self.train_attack().validate()?;
        }
        if self.eval.adversarial_samples > 0 {
            self.eval_attack().validate()?;
        }
        if self.model.arch == Arch::Conv && self.model.channels.is_empty() {
            return bad("conv model needs channels".into());
        }
        if self.model.channels.contains(&0) || self.model.hidden.contains(&0) {
            return bad("layer widths must be >= 1".into());
        }
        Ok(())
    }

    pub fn data_source(&self) -> Result<DataSource> {
        let d = &self.data;
        Ok(match d.source.as_str() {
            "synthetic" => DataSource::Synthetic(SyntheticSpec {
                classes: d.classes,
                samples: d.samples,
                seed: derive_seed(&[self.seed, crate::rng::purpose::DATA]),
                size: d.size,
                channels: d.channels,
                noise: d.noise,
                jitter_degrees: d.jitter_degrees,
                distractor: d.distractor,
            }),
            "idx" => {
                if d.images.is_empty() || d.labels.is_empty() {
                    return Err(Error::InvalidConfig("idx needs data.images and data.labels".into()));
                }
                DataSource::Idx {
                    images: PathBuf::from(&d.images),
                    labels: PathBuf::from(&d.labels),
                }
            }
            "cifar_binary" => {
                if d.files.is_empty() {
                    return Err(Error::InvalidConfig("cifar_binary needs data.files".into()));
                }
                DataSource::CifarBinary {
                    files: d.files.iter().map(PathBuf::from).collect(),
                }
            }
            other => return Err(Error::InvalidConfig(format!("unknown data source {other:?}"))),
        })
    }

    /// Family settings; `None` for vanilla training.
    pub fn augment_settings(&self) -> Option<AugmentSettings> {
        let family = self.train.method.family()?;
        Some(AugmentSettings {
            family,
            ops: self.aug.ops.clone(),
            m_max: self.aug.m_max,
            d_max: self.aug.d_max,
            augmix_magnitude: self.aug.augmix_magnitude,
            buckets: self.label.buckets,
            eps_max: self.attack.eps_max,
            mixup_beta: self.aug.mixup_beta,
        })
    }

    pub fn train_attack(&self) -> AttackConfig {
        AttackConfig {
            eps_max: self.attack.eps_max,
            iterations: self.attack.iterations,
            step_divisor: self.attack.step_divisor,
            restarts: self.attack.restarts,
            zero_restart: false,
            buckets: self.label.buckets,
        }
    }

    pub fn eval_attack(&self) -> AttackConfig {
        AttackConfig {
            iterations: self.eval.attack_iterations,
            restarts: self.eval.attack_restarts,
            step_divisor: self.attack.step_divisor,
            ..AttackConfig::evaluation(self.eval.attack_eps)
        }
    }

    pub fn baseline(&self) -> BaselineConfig {
        let rho = if self.label.mode == LabelMode::Ccat {
            self.label.ccat_rho
        } else {
            self.label.rho
        };
        BaselineConfig {
            mode: self.label.mode,
            rho,
        }
    }
}
