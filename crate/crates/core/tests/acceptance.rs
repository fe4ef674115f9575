//! End-to-end acceptance run: one line per criterion, non-zero exit on any failure.

mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use autolabel::attacks::adv_bucket;
use autolabel::augment::{augmix_bucket, mixup_bucket, mixup_buckets, BucketKey};
use autolabel::calibration::{accuracy_difference, calibration_report};
use autolabel::harness::config::{Method, TrainConfig};
use autolabel::harness::train::{prepare_data, run_training_with, Hooks};
use autolabel::harness::{run_motivation_sweep, SweepRow};
use autolabel::labels::{init_label_table, updated_confidence, LabelMode};
use autolabel::rng::{stream, Rng as Stream};
use common::{ceil_ratio_bucket, gradient_check_many, naive_ece, pgd_contract, random_predictions, report};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_oracle() -> Outcome {
    let g = gradient_check_many(0..100);
    outcome(
        g.max_rel_err <= 1e-4 && g.checked > 0,
        format!("max rel err {:.2e} over {} coordinates ({} kinks skipped)", g.max_rel_err, g.checked, g.skipped_kinks),
    )
}

fn ece_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut r1_mismatch = 0;
    for seed in 0..1000u64 {
        let bins = [1, 5, 10, 15][(seed % 4) as usize];
        let (preds, labels) = random_predictions(seed, bins);
        let rep = calibration_report(&preds, &labels, bins).unwrap();
        let conf: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
        let correct: Vec<bool> = preds.iter().zip(&labels).map(|(p, &y)| p.predicted_class == y).collect();
        let (ece, acc, mean_conf) = naive_ece(&conf, &correct, bins);
        worst = worst
            .max((rep.ece - ece).abs())
            .max((rep.accuracy - acc).abs())
            .max((rep.mean_confidence - mean_conf).abs());
        let one = calibration_report(&preds, &labels, 1).unwrap();
        if one.ece != (one.accuracy - one.mean_confidence).abs() {
            r1_mismatch += 1;
        }
    }
    outcome(
        worst <= 1e-12 && r1_mismatch == 0,
        format!("max deviation {worst:.1e} over 1000 sets, {r1_mismatch} single-bin mismatches"),
    )
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

fn label_laws() -> Outcome {
    let mut rng = stream(&[3, 0x1ABE]);
    let mut violations = Vec::new();
    let pick = |rng: &mut Stream| match rng.random_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random::<f64>(),
    };
    let buckets = mixup_buckets(4);
    for i in 0..10_000 {
        let (y, alpha, ece, conf, acc) = (pick(&mut rng), pick(&mut rng), pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let k = rng.random_range(2..=20usize);
        let (raw, out) = updated_confidence(y, alpha, ece, conf, acc, k);
        let floor = acc.max(1.0 / k as f64);
        if (raw - (y - alpha * ece * sign(conf - acc))).abs() > 1e-15 {
            violations.push(format!("#{i}: step"));
        }
        if !(out >= acc && out >= floor && out <= 1.0) {
            violations.push(format!("#{i}: range"));
        }
        if raw >= floor && raw <= 1.0 && (((out - y).abs() - alpha * ece * sign(conf - acc).abs()).abs() > 1e-12 || (out - y) * sign(conf - acc) > 0.0) {
            violations.push(format!("#{i}: unclipped step"));
        }
        if y >= floor && updated_confidence(y, alpha, 0.0, conf, acc, k).1 != y {
            violations.push(format!("#{i}: fixed point"));
        }
        let mut table = init_label_table(k, &buckets, alpha).unwrap();
        for b in &buckets {
            table.update_bucket(b, &report(ece, acc, conf)).unwrap();
        }
        let cls = rng.random_range(0..k);
        let other = rng.random_range(0..k);
        let gamma = rng.random_range(0.0..=0.5);
        for b in &buckets {
            let s = table.soft_label(b, cls).unwrap();
            let m = table.mixup_soft_label(b, other, cls, gamma).unwrap();
            for l in [s.probs(), m.probs()] {
                if (l.iter().sum::<f64>() - 1.0).abs() > 1e-9 || l.iter().any(|&p| p < 0.0) {
                    violations.push(format!("#{i}: soft label {b}"));
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!("10000 tuples, {} violations {:?}", violations.len(), violations.iter().take(3).collect::<Vec<_>>()),
    )
}

fn bucket_n(key: BucketKey) -> u64 {
    match key {
        BucketKey::AugMix { n, .. } | BucketKey::Mixup { n } | BucketKey::Adversarial { n } => n as u64,
        other => panic!("{other}"),
    }
}

fn bucket_maps() -> Outcome {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for n in [1u64, 2, 3, 4, 5, 7, 10, 16] {
        for q in [1000u64, 1 << 12] {
            for p in 0..=q {
                let u = p as f64 / q as f64;
                let want = ceil_ratio_bucket(p, q, n);
                let a = bucket_n(augmix_bucket(2, u, n as usize));
                let e = bucket_n(adv_bucket(0.1 * u, 0.1, n as usize).unwrap());
                checked += 2;
                if a != want || e != want {
                    bad.push(format!("u={p}/{q} N={n}: augmix {a} adv {e} want {want}"));
                }
            }
        }
        let q = 1u64 << 14;
        for p in 0..=q {
            let m = bucket_n(mixup_bucket(p as f64 / q as f64, n as usize));
            checked += 1;
            if m != ceil_ratio_bucket(2 * p.min(q - p), q, n) || !(1..=n).contains(&m) {
                bad.push(format!("γ={p}/{q} N={n}: mixup {m}"));
            }
        }
        let merged = [
            bucket_n(augmix_bucket(3, 0.0, n as usize)) == 1,
            bucket_n(adv_bucket(0.0, 0.1, n as usize).unwrap()) == 1,
            bucket_n(mixup_bucket(0.0, n as usize)) == 1,
            bucket_n(mixup_bucket(1.0, n as usize)) == 1,
        ];
        if merged.contains(&false) {
            bad.push(format!("merge rule N={n}: {merged:?}"));
        }
    }
    outcome(bad.is_empty(), format!("{checked} grid points, {} mismatches {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()))
}

fn pgd() -> Outcome {
    let c = pgd_contract(11, 1000);
    let delta = accuracy_difference(0.869, 0.476, 0.956, 0.0);
    let delta_ok = (delta * 100.0 - 38.9).abs() < 1e-9;
    outcome(
        c.attacks == 1000 && c.max_excess <= 1e-7 && c.out_of_range == 0 && c.loss_regressions == 0 && delta_ok,
        format!(
            "{} attacks, max ‖δ‖∞ − ε {:.1e}, {} out of range, {} loss regressions, {} skipped; Δ = {:+.1}",
            c.attacks,
            c.max_excess,
            c.out_of_range,
            c.loss_regressions,
            c.skipped,
            delta * 100.0
        ),
    )
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn motivation_trend() -> Outcome {
    let mut base = TrainConfig::default();
    base.eval.adversarial_samples = 0;
    let modes = [LabelMode::OneHot, LabelMode::Autolabel];
    let rows = run_motivation_sweep::<f32>(&base, &[2, 5, 8, 10], &SEEDS, &modes, |r| {
        eprintln!(
            "  m={} seed={} {}: clean acc {:.4}, corrupted ece {:.4}",
            r.magnitude, r.seed, r.mode, r.clean_accuracy, r.corrupted_ece
        )
    })
    .unwrap();
    let select = |m: u8, mode: LabelMode| rows.iter().filter(move |r: &&SweepRow| r.magnitude == m && r.mode == mode);
    let oh2 = mean(select(2, LabelMode::OneHot).map(|r| r.clean_accuracy));
    let oh10 = mean(select(10, LabelMode::OneHot).map(|r| r.clean_accuracy));
    let al10 = mean(select(10, LabelMode::Autolabel).map(|r| r.clean_accuracy));
    let a = oh2 - oh10 >= 0.01;
    let b = al10 >= oh10;
    let mut wins = Vec::new();
    for m in [5u8, 8, 10] {
        let w = SEEDS
            .iter()
            .filter(|&&s| {
                let get = |mode| select(m, mode).find(|r| r.seed == s).unwrap().corrupted_ece;
                get(LabelMode::Autolabel) <= get(LabelMode::OneHot)
            })
            .count();
        wins.push((m, w));
    }
    let c = wins.iter().all(|&(_, w)| w >= 2);
    outcome(
        a && b && c,
        format!(
            "(a) one_hot clean m2 {oh2:.4} → m10 {oh10:.4} [{}]; (b) m10 autolabel {al10:.4} vs one_hot {oh10:.4} [{}]; (c) corrupted-ECE seed wins {wins:?} [{}]",
            ok(a),
            ok(b),
            ok(c)
        ),
    )
}

fn adversarial_config(seed: u64, eps_max: f64, mode: LabelMode, method: Method) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.train.method = method;
    cfg.train.epochs = ADV_EPOCHS;
    cfg.train.lr = ADV_LR;
    cfg.attack.eps_max = eps_max;
    cfg.attack.iterations = ADV_ITERATIONS;
    cfg.label.mode = mode;
    cfg.eval.corruption = false;
    cfg.eval.attack_eps = ADV_EVAL_EPS;
    cfg.eval.attack_iterations = 50;
    cfg.eval.attack_restarts = 3;
    cfg.eval.adversarial_samples = 500;
    cfg
}

const ADV_EPOCHS: usize = 15;
const ADV_LR: f64 = 0.02;
const ADV_ITERATIONS: usize = 10;
const ADV_EVAL_EPS: f64 = 0.03;

fn adversarial_trend() -> Outcome {
    // (clean, adversarial) per seed
    let mut vanilla = Vec::new();
    let mut runs: Vec<(f64, LabelMode, u64, f64, f64)> = Vec::new();
    for &seed in &SEEDS {
        let cfg = adversarial_config(seed, 0.1, LabelMode::OneHot, Method::Vanilla);
        let data = prepare_data::<f32>(&cfg).unwrap();
        let m = run_training_with(&cfg, &data, Hooks::default()).unwrap().report.final_metrics.unwrap();
        let base = (m.clean.accuracy, m.adversarial_accuracy.unwrap());
        eprintln!("  seed={seed} vanilla: clean {:.4} adversarial {:.4}", base.0, base.1);
        vanilla.push(base);
        for eps_max in [0.03, 0.1] {
            for mode in [LabelMode::OneHot, LabelMode::Autolabel] {
                let cfg = adversarial_config(seed, eps_max, mode, Method::AdvTraining);
                let m = run_training_with(&cfg, &data, Hooks::default()).unwrap().report.final_metrics.unwrap();
                let (clean, adv) = (m.clean.accuracy, m.adversarial_accuracy.unwrap());
                let delta = accuracy_difference(clean, adv, base.0, base.1);
                eprintln!("  seed={seed} ε_max={eps_max} {mode}: clean {clean:.4} adversarial {adv:.4} Δ {:+.2}", delta * 100.0);
                runs.push((eps_max, mode, seed, clean, delta));
            }
        }
    }
    let at = |mode: LabelMode, f: fn(&(f64, LabelMode, u64, f64, f64)) -> f64| {
        mean(runs.iter().filter(|r| r.0 == 0.1 && r.1 == mode).map(f))
    };
    let (oh_clean, al_clean) = (at(LabelMode::OneHot, |r| r.3), at(LabelMode::Autolabel, |r| r.3));
    let (oh_delta, al_delta) = (at(LabelMode::OneHot, |r| r.4), at(LabelMode::Autolabel, |r| r.4));
    let clean_ok = al_clean > oh_clean;
    let delta_ok = al_delta >= oh_delta;
    outcome(
        clean_ok && delta_ok,
        format!(
            "ε_max=0.1: clean autolabel {al_clean:.4} vs one_hot {oh_clean:.4} [{}]; Δ autolabel {:+.2} vs one_hot {:+.2} [{}]",
            ok(clean_ok),
            al_delta * 100.0,
            oh_delta * 100.0,
            ok(delta_ok)
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::default();
    cfg.seed = 5;
    cfg.train.epochs = 3;
    cfg.eval.adversarial_samples = 100;
    cfg.eval.corruption_samples = 200;
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, cfg.to_text()).unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_autolabel"))
            .args(["train", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .env_remove("AUTOLABEL_SEED")
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("train failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(std::fs::read(out.join("run.json")).unwrap());
    }
    outcome(
        outputs[0] == outputs[1],
        format!("run.json {} bytes, identical: {}", outputs[0].len(), outputs[0] == outputs[1]),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    // libtest flags are ignored; bare numbers select criteria
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient oracle", gradient_oracle),
        ("ECE oracle", ece_oracle),
        ("label-update laws", label_laws),
        ("bucket maps", bucket_maps),
        ("PGD contract", pgd),
        ("motivation trend", motivation_trend),
        ("adversarial trade-off", adversarial_trend),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {} {name}: {} ({secs:.1}s) {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
