use std::fs;

use autolabel::data::formats::{
    parse_cifar, parse_idx_images, parse_idx_labels, write_cifar, write_idx_images, write_idx_labels,
    CIFAR_RECORD,
};
use autolabel::data::{
    corrupt, load_dataset, split_train_val, CorruptionSpec, DataSource, Dataset, SyntheticSpec,
    CORRUPTION_KINDS,
};
use autolabel::harness::config::{Method, TrainConfig};
use autolabel::harness::eval::evaluate_corrupted;
use autolabel::harness::train::run_training;
use autolabel::image::Image;
use autolabel::labels::LabelMode;
use autolabel::rng::stream;
use autolabel::Error;
use rand::Rng;

fn byte_images(n: usize, c: usize, side: usize, seed: u64) -> Vec<Image<f64>> {
    let mut rng = stream(&[seed]);
    (0..n)
        .map(|_| {
            let px = (0..c * side * side)
                .map(|_| rng.random_range(0..=255u8) as f64 / 255.0)
                .collect();
            Image::new(c, side, side, px).unwrap()
        })
        .collect()
}

fn format_offset(e: Error) -> u64 {
    match e {
        Error::Format { offset, .. } => offset,
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn idx_files_round_trip_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let images = byte_images(10, 1, 28, 1);
    let labels: Vec<usize> = (0..10).map(|i| (i * 3) % 10).collect();
    let img_bytes = write_idx_images(&images).unwrap();
    assert_eq!(&img_bytes[..4], &[0, 0, 8, 3]);
    assert_eq!(img_bytes.len(), 16 + 10 * 28 * 28);
    fs::write(dir.path().join("img.idx"), &img_bytes).unwrap();
    fs::write(dir.path().join("lbl.idx"), write_idx_labels(&labels).unwrap()).unwrap();
    let ds: Dataset<f64> = load_dataset(&DataSource::Idx {
        images: dir.path().join("img.idx"),
        labels: dir.path().join("lbl.idx"),
    })
    .unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.image_shape(), Some([1, 28, 28]));
    assert_eq!(ds.images(), &images[..]);
    assert_eq!(ds.labels(), &labels[..]);
}

#[test]
fn cifar_records_round_trip() {
    let images = byte_images(4, 3, 32, 2);
    let labels = vec![9, 0, 3, 3];
    let bytes = write_cifar(&images, &labels).unwrap();
    assert_eq!(bytes.len(), 4 * CIFAR_RECORD);
    assert_eq!(bytes[0], 9);
    let (back, ys) = parse_cifar::<f32>(&bytes).unwrap();
    assert_eq!(ys, labels);
    assert!(back.iter().all(|im| im.shape() == [3, 32, 32]));
    for (a, b) in back.iter().zip(&images) {
        assert!(a.cast::<f64>().max_abs_diff(b) < 1e-6);
    }
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    fs::write(&p1, &bytes).unwrap();
    fs::write(&p2, &bytes[..CIFAR_RECORD]).unwrap();
    let ds: Dataset<f64> = load_dataset(&DataSource::CifarBinary { files: vec![p1, p2] }).unwrap();
    assert_eq!(ds.len(), 5);
    assert_eq!(ds.num_classes(), 10);
}

#[test]
fn malformed_files_report_offsets() {
    let images = byte_images(2, 1, 4, 3);
    let mut bytes = write_idx_images(&images).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[3] = 1;
    assert_eq!(format_offset(parse_idx_images::<f64>(&bad_magic).unwrap_err()), 0);
    assert_eq!(format_offset(parse_idx_images::<f64>(&bytes[..10]).unwrap_err()), 8);
    let truncated = &bytes[..bytes.len() - 1];
    assert_eq!(format_offset(parse_idx_images::<f64>(truncated).unwrap_err()), truncated.len() as u64);
    bytes.push(0);
    assert_eq!(format_offset(parse_idx_images::<f64>(&bytes).unwrap_err()), 16 + 32);
    assert!(parse_idx_labels(&write_idx_images(&images).unwrap()).is_err());
    let cifar = write_cifar(&byte_images(2, 3, 32, 4), &[1, 2]).unwrap();
    assert_eq!(
        format_offset(parse_cifar::<f64>(&cifar[..CIFAR_RECORD + 5]).unwrap_err()),
        CIFAR_RECORD as u64
    );
}

#[test]
fn synthetic_loads_are_deterministic_and_split_cleanly() {
    let src = DataSource::Synthetic(SyntheticSpec::new(10, 100, 7));
    let a: Dataset<f64> = load_dataset(&src).unwrap();
    let b: Dataset<f64> = load_dataset(&src).unwrap();
    assert_eq!(a, b);
    let (train, val) = split_train_val(&a, 10, 3).unwrap();
    assert_eq!((train.len(), val.len()), (90, 10));
    for im in val.images() {
        assert!(!train.images().contains(im));
    }
    assert_eq!(split_train_val(&a, 10, 3).unwrap(), (train, val));
    assert!(split_train_val(&a, 100, 3).is_err());
}

#[test]
fn corruption_severity_degrades_a_trained_model() {
    let mut cfg = TrainConfig::default();
    cfg.seed = 3;
    cfg.data.samples = 3600;
    cfg.data.val_size = 100;
    cfg.data.test_size = 600;
    cfg.model.channels = vec![8, 16];
    cfg.model.hidden = vec![64];
    cfg.train.method = Method::Vanilla;
    cfg.train.epochs = 4;
    cfg.label.mode = LabelMode::OneHot;
    cfg.eval.corruption = false;
    cfg.eval.adversarial_samples = 0;
    cfg.validate().unwrap();
    let out = run_training::<f32>(&cfg).unwrap();
    let data = autolabel::harness::train::prepare_data::<f32>(&cfg).unwrap();
    assert!(data.test.len() >= 500);
    let (_, cells) = evaluate_corrupted(&out.model, &data.test, 15, 11).unwrap();
    for kind in CORRUPTION_KINDS {
        let acc: Vec<f64> = cells.iter().filter(|c| c.kind == kind).map(|c| c.accuracy).collect();
        assert_eq!(acc.len(), 5);
        let inversions: Vec<f64> = acc.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] - w[0]).collect();
        assert!(
            inversions.len() <= 1 && inversions.iter().all(|&d| d <= 0.005 + 1e-12),
            "{kind}: {acc:?}"
        );
    }
    let noise: Vec<f64> = cells
        .iter()
        .filter(|c| c.kind == CORRUPTION_KINDS[0])
        .map(|c| c.accuracy)
        .collect();
    assert!(noise[4] <= noise[0]);
}

#[test]
fn corruptions_stay_in_range() {
    let images = byte_images(3, 3, 8, 5);
    for spec in CorruptionSpec::suite() {
        for (i, im) in images.iter().enumerate() {
            let out = corrupt(im, &spec, &mut stream(&[i as u64]));
            assert!(out.in_unit_range());
            assert_eq!(out.shape(), im.shape());
        }
    }
}
