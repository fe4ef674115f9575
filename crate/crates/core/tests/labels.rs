mod common;

use autolabel::augment::{adversarial_buckets, mixup_buckets, BucketKey, OpType};
use autolabel::labels::{
    baseline_label, init_label_table, updated_confidence, BaselineConfig, LabelMode,
};
use common::report;
use proptest::prelude::*;

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sums_to_one(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn update_laws(
        y in 0.0f64..=1.0,
        alpha in 0.0f64..=1.0,
        ece in 0.0f64..=1.0,
        conf in 0.0f64..=1.0,
        acc in 0.0f64..=1.0,
        k in 2usize..=100,
    ) {
        let (raw, out) = updated_confidence(y, alpha, ece, conf, acc, k);
        let step = -alpha * ece * sign(conf - acc);
        prop_assert!((raw - (y + step)).abs() <= 1e-15);
        let floor = acc.max(1.0 / k as f64);
        prop_assert!(out >= acc && out >= floor && out <= 1.0);
        if raw >= floor && raw <= 1.0 {
            prop_assert_eq!(out, raw);
            prop_assert!(((out - y).abs() - alpha * ece).abs() <= 1e-12);
            prop_assert!((out - y) * sign(conf - acc) <= 0.0);
        }
        if y >= floor {
            let (_, fixed) = updated_confidence(y, alpha, 0.0, conf, acc, k);
            prop_assert_eq!(fixed, y);
        }
        if conf == acc {
            prop_assert_eq!(raw, y);
        }
    }

    #[test]
    fn table_labels_are_distributions(
        ece in 0.0f64..=1.0,
        conf in 0.0f64..=1.0,
        acc in 0.0f64..=1.0,
        alpha in 0.0f64..=1.0,
        steps in 1usize..6,
        k in 2usize..=20,
        y in 0usize..20,
        gamma in 0.0f64..=0.5,
        other in 0usize..20,
    ) {
        let y = y % k;
        let other = other % k;
        let buckets = mixup_buckets(5);
        let mut table = init_label_table(k, &buckets, alpha).unwrap();
        for _ in 0..steps {
            for b in &buckets {
                table.update_bucket(b, &report(ece, acc, conf)).unwrap();
            }
            table.advance_epoch();
        }
        for b in &buckets {
            let v = table.get(b).unwrap();
            prop_assert!(v >= 1.0 / k as f64 - 1e-15 && v <= 1.0);
            let l = table.soft_label(b, y).unwrap();
            prop_assert!(sums_to_one(l.probs()));
            prop_assert_eq!(l.probs()[y], v);
            let m = table.mixup_soft_label(b, other, y, gamma).unwrap();
            prop_assert!(sums_to_one(m.probs()));
            prop_assert!(m.probs().iter().all(|&p| p >= 0.0));
            if other != y {
                let minor = if k == 2 { 1.0 - v } else { (1.0 - v).min(gamma / (1.0 - gamma) * v) };
                prop_assert!((m.probs()[other] - minor).abs() <= 1e-12);
                prop_assert_eq!(m.probs()[y], v);
            }
        }
    }
}

#[test]
fn hand_examples() {
    let (_, v) = updated_confidence(1.0, 0.1, 0.2, 0.9, 0.7, 10);
    assert!((v - 0.98).abs() < 1e-12);
    let (raw, v) = updated_confidence(0.6, 0.5, 0.3, 0.9, 0.55, 10);
    assert!((raw - 0.45).abs() < 1e-12);
    assert_eq!(v, 0.55);
    let (_, v) = updated_confidence(0.9, 0.1, 0.2, 0.5, 0.7, 10);
    assert!((v - 0.92).abs() < 1e-12);
    let (_, v) = updated_confidence(0.99, 0.5, 0.2, 0.5, 0.7, 10);
    assert_eq!(v, 1.0);
}

#[test]
fn table_construction_and_lookup() {
    let b = adversarial_buckets(10);
    let t = init_label_table(10, &b, 0.01).unwrap();
    assert_eq!(t.len(), 10);
    assert!(t.entries().all(|(_, v)| v == 1.0));
    assert!(init_label_table(1, &b, 0.01).is_err());
    assert!(init_label_table(10, &[], 0.01).is_err());
    assert!(init_label_table(10, &b, -0.1).is_err());
    assert!(init_label_table(10, &[b[0], b[0]], 0.01).is_err());
    let missing = BucketKey::RandAug { op: OpType::Rotation, magnitude: 3 };
    assert!(t.get(&missing).is_err());
    assert!(t.soft_label(&b[0], 10).is_err());
    let l = t.soft_label(&b[0], 3).unwrap();
    assert_eq!(l.probs()[3], 1.0);
    assert!(t.mixup_soft_label(&b[0], 1, 2, 0.6).is_err());
}

#[test]
fn unclipped_update_moves_only_its_bucket() {
    let b = adversarial_buckets(4);
    let mut t = init_label_table(10, &b, 0.5).unwrap();
    let rec = t.update_bucket(&b[1], &report(0.2, 0.6, 0.8)).unwrap();
    assert!((rec.after - 0.9).abs() < 1e-12);
    for (i, key) in b.iter().enumerate() {
        let expect = if i == 1 { 0.9 } else { 1.0 };
        assert!((t.get(key).unwrap() - expect).abs() < 1e-12);
    }
    let l = t.soft_label(&b[1], 0).unwrap();
    assert!(l.probs()[1..].iter().all(|&p| (p - 0.1 / 9.0).abs() < 1e-15));
    assert!(t.update_bucket(&b[0], &report(f64::NAN, 0.5, 0.5)).is_err());
}

#[test]
fn baselines() {
    let one = BaselineConfig { mode: LabelMode::OneHot, rho: 0.0 };
    assert_eq!(baseline_label(&one, 2, 4, 0.0, 0.1).unwrap().probs(), &[0.0, 0.0, 1.0, 0.0]);
    let ls = BaselineConfig { mode: LabelMode::LabelSmoothing, rho: 0.1 };
    let l = baseline_label(&ls, 0, 10, 0.0, 0.1).unwrap();
    assert!((l.probs()[0] - 0.9).abs() < 1e-15);
    assert!(l.probs()[1..].iter().all(|&p| (p - 0.1 / 9.0).abs() < 1e-15));
    let ccat = BaselineConfig::ccat();
    let at_zero = baseline_label(&ccat, 1, 10, 0.0, 0.03).unwrap();
    assert_eq!(at_zero.probs()[1], 1.0);
    let at_edge = baseline_label(&ccat, 1, 10, 0.03, 0.03).unwrap();
    assert!(at_edge.probs().iter().all(|&p| (p - 0.1).abs() < 1e-12));
    let half = baseline_label(&ccat, 1, 10, 0.015, 0.03).unwrap();
    let g = 0.5f64.powi(10);
    assert!((half.probs()[1] - (g + (1.0 - g) / 10.0)).abs() < 1e-12);
    assert!(sums_to_one(half.probs()));
}
