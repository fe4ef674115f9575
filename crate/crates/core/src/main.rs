use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autolabel::augment::{augmix, mixup, sample_mixup_pair, sample_randaug, ppm::write_ppm, Family};
use autolabel::harness::config::{Precision, TrainConfig};
use autolabel::harness::export::{labels_csv, write_artifacts};
use autolabel::harness::train::{final_metrics, prepare_data, run_training_with, Hooks, RunReport};
use autolabel::harness::{evaluate, evaluate_adversarial, run_motivation_sweep, sweep_csv};
use autolabel::labels::LabelMode;
use autolabel::nn::checkpoint;
use autolabel::rng::{purpose, stream};
use autolabel::{Error, Result, Scalar};

#[derive(Parser)]
#[command(name = "autolabel", version, about = "Calibration-driven adaptive labels for augmented training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write run.json, metrics.csv, labels.csv, bins.csv and model.alnn.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean, corrupted and adversarial metrics of a checkpoint on the test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Adversarial accuracy of a checkpoint.
    AttackEval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// One-hot vs autolabel over maximum RandAug magnitudes.
    SweepMotivation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2u8, 5, 8, 10])]
        magnitudes: Vec<u8>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes augmented training samples as PPM images.
    PreviewAug {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Re-exports the label trajectory of a finished run as CSV.
    ExportLabels {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidConfig(_) => 2,
                Error::NonFinite(_) => 3,
                _ => 1,
            })
        }
    }
}

fn load(path: &Path) -> Result<TrainConfig> {
    let cfg = TrainConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Train { config, out } => {
            let cfg = load(&config)?;
            match cfg.train.precision {
                Precision::F32 => train::<f32>(&cfg, out),
                Precision::F64 => train::<f64>(&cfg, out),
            }
        }
        Command::Eval { config, checkpoint } => {
            let cfg = load(&config)?;
            match cfg.train.precision {
                Precision::F32 => eval::<f32>(&cfg, &checkpoint),
                Precision::F64 => eval::<f64>(&cfg, &checkpoint),
            }
        }
        Command::AttackEval {
            config,
            checkpoint,
            eps,
            samples,
        } => {
            let mut cfg = load(&config)?;
            if let Some(e) = eps {
                cfg.eval.attack_eps = e;
            }
            if let Some(n) = samples {
                cfg.eval.adversarial_samples = n;
            }
            match cfg.train.precision {
                Precision::F32 => attack_eval::<f32>(&cfg, &checkpoint),
                Precision::F64 => attack_eval::<f64>(&cfg, &checkpoint),
            }
        }
        Command::SweepMotivation {
            config,
            magnitudes,
            seeds,
            out,
        } => {
            let cfg = load(&config)?;
            let modes = [LabelMode::OneHot, LabelMode::Autolabel];
            let log = |r: &autolabel::harness::SweepRow| {
                eprintln!(
                    "m={} seed={} {}: clean acc {:.4} ece {:.4} conf {:.4}, corrupted acc {:.4} ece {:.4} conf {:.4}",
                    r.magnitude,
                    r.seed,
                    r.mode,
                    r.clean_accuracy,
                    r.clean_ece,
                    r.clean_confidence,
                    r.corrupted_accuracy,
                    r.corrupted_ece,
                    r.corrupted_confidence
                )
            };
            let rows = match cfg.train.precision {
                Precision::F32 => run_motivation_sweep::<f32>(&cfg, &magnitudes, &seeds, &modes, log)?,
                Precision::F64 => run_motivation_sweep::<f64>(&cfg, &magnitudes, &seeds, &modes, log)?,
            };
            emit(out.as_deref(), &sweep_csv(&rows))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::PreviewAug { config, out, count } => {
            let cfg = load(&config)?;
            preview(&cfg, &out, count)
        }
        Command::ExportLabels { run, out } => {
            let report: RunReport = serde_json::from_str(&fs::read_to_string(run)?)?;
            emit(out.as_deref(), &labels_csv(&report))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn train<T: Scalar>(cfg: &TrainConfig, out: Option<PathBuf>) -> Result<ExitCode> {
    let data = prepare_data::<T>(cfg)?;
    let hooks = Hooks {
        validation: None,
        on_epoch: Some(Box::new(|e: &autolabel::harness::EpochRecord| {
            eprintln!(
                "epoch {}: lr {} loss {:.4} val acc {:.4} val ece {:.4}",
                e.epoch, e.lr, e.train_loss, e.val_accuracy, e.val_ece
            )
        })),
    };
    let outcome = run_training_with(cfg, &data, hooks)?;
    let dir = out.unwrap_or_else(|| {
        if cfg.out_dir.is_empty() {
            PathBuf::from("run")
        } else {
            PathBuf::from(&cfg.out_dir)
        }
    });
    write_artifacts(&dir, &outcome.report, &outcome.model)?;
    if let Some(reason) = &outcome.report.aborted {
        eprintln!("aborted: {reason}");
        return Ok(ExitCode::from(3));
    }
    if let Some(m) = &outcome.report.final_metrics {
        println!("clean accuracy {:.4} ece {:.4}", m.clean.accuracy, m.clean.ece);
        if let Some(c) = m.corrupted {
            println!("corrupted accuracy {:.4} ece {:.4}", c.accuracy, c.ece);
        }
        if let Some(a) = m.adversarial_accuracy {
            println!("adversarial accuracy {a:.4}");
        }
        if let Some(d) = m.accuracy_difference {
            println!("accuracy difference {d:+.4}");
        }
    }
    println!("artifacts in {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn load_model<T: Scalar>(path: &Path) -> Result<autolabel::nn::Model<T>> {
    let mut r = std::io::BufReader::new(fs::File::open(path)?);
    checkpoint::load(&mut r)
}

fn eval<T: Scalar>(cfg: &TrainConfig, ckpt: &Path) -> Result<ExitCode> {
    let model = load_model::<T>(ckpt)?;
    let data = prepare_data::<T>(cfg)?;
    let m = final_metrics(cfg, &model, &data.test)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(ExitCode::SUCCESS)
}

fn attack_eval<T: Scalar>(cfg: &TrainConfig, ckpt: &Path) -> Result<ExitCode> {
    let model = load_model::<T>(ckpt)?;
    let data = prepare_data::<T>(cfg)?;
    let n = if cfg.eval.adversarial_samples == 0 {
        data.test.len()
    } else {
        cfg.eval.adversarial_samples
    };
    let test = data.test.truncated(n);
    let clean = evaluate(&model, &test, cfg.label.ece_bins)?;
    let mut rng = stream(&[cfg.seed, purpose::ATTACK_EVAL]);
    let adv = evaluate_adversarial(&model, &test, &cfg.eval_attack(), &mut rng)?;
    println!(
        "eps {} samples {}: clean accuracy {:.4}, adversarial accuracy {:.4}, skipped {}",
        cfg.eval.attack_eps,
        test.len(),
        clean.accuracy,
        adv.accuracy,
        adv.skipped
    );
    Ok(ExitCode::SUCCESS)
}

fn preview(cfg: &TrainConfig, out: &Path, count: usize) -> Result<ExitCode> {
    let data = prepare_data::<f64>(cfg)?;
    let settings = cfg
        .augment_settings()
        .ok_or_else(|| Error::InvalidConfig("vanilla runs have nothing to preview".into()))?;
    fs::create_dir_all(out)?;
    let train = &data.train;
    for i in 0..count.min(train.len()) {
        let mut rng = stream(&[cfg.seed, purpose::PREVIEW, i as u64]);
        let x = &train.images()[i];
        let (img, tag) = match settings.family {
            Family::RandAug => {
                let (img, _, key) = sample_randaug(x, &mut rng, &settings.ops, settings.m_max)?;
                (img, key.to_string())
            }
            Family::AugMix => {
                let (img, _, key) = augmix(
                    x,
                    &mut rng,
                    &settings.ops,
                    settings.d_max,
                    settings.augmix_magnitude,
                    settings.buckets,
                )?;
                (img, key.to_string())
            }
            Family::Mixup => {
                let pair = sample_mixup_pair(&mut rng, settings.mixup_beta, train.len())?;
                let (img, key) = mixup(x, &train.images()[pair.partner_index], &pair, settings.buckets)?;
                (img, key.to_string())
            }
            Family::Adversarial => {
                return Err(Error::InvalidConfig(
                    "adversarial examples depend on a model; use attack-eval".into(),
                ))
            }
        };
        for (name, im) in [(format!("{i:03}_clean.ppm"), x), (format!("{i:03}_aug.ppm"), &img)] {
            let mut f = fs::File::create(out.join(name))?;
            write_ppm(im, &mut f)?;
        }
        println!("{i:03}: label {} {tag}", train.labels()[i]);
    }
    Ok(ExitCode::SUCCESS)
}
