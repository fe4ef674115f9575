mod common;

use autolabel::nn::{mlp_layers, Model, SoftLabel};
use autolabel::rng::stream;
use common::{gradient_check, random_batch, random_model, reference_loss};

#[test]
fn gradients_match_central_differences() {
    for seed in 0..20 {
        let g = gradient_check(seed);
        assert!(g.checked > 0, "seed {seed} had nothing to check");
        assert!(g.max_rel_err <= 1e-4, "seed {seed}: {g:?}");
    }
}

#[test]
fn reported_loss_matches_reference() {
    for seed in 0..10 {
        let model = random_model(seed);
        let mut rng = stream(&[seed, 3]);
        let batch = random_batch(&mut rng, 4, model.input_shape());
        let k = model.num_classes();
        let targets: Vec<SoftLabel> = (0..4).map(|i| SoftLabel::one_hot(i % k, k)).collect();
        let g = model.gradients(&batch, &targets, false).unwrap();
        let expect = reference_loss(&model.logits(&batch).unwrap(), &targets);
        assert!((g.loss - expect).abs() <= 1e-12 * expect.max(1.0));
        assert!(g.input.is_none());
        let inp = model.input_gradients(&batch, &targets).unwrap();
        assert!(inp.params.is_empty());
        assert_eq!(inp.input, model.gradients(&batch, &targets, true).unwrap().input);
    }
}

#[test]
fn single_precision_tracks_double() {
    let model = random_model(4);
    let small: Model<f32> = model.cast();
    let mut rng = stream(&[9]);
    let batch = random_batch(&mut rng, 3, model.input_shape());
    let k = model.num_classes();
    let targets: Vec<SoftLabel> = (0..3).map(|i| SoftLabel::one_hot(i % k, k)).collect();
    let a = model.gradients(&batch, &targets, false).unwrap();
    let b = small.gradients(&batch.cast(), &targets, false).unwrap();
    assert!((a.loss - b.loss).abs() < 1e-5);
    for (x, y) in a.params.iter().zip(&b.params) {
        for (u, v) in x.data().iter().zip(y.data()) {
            assert!((u - *v as f64).abs() < 1e-4, "{u} vs {v}");
        }
    }
}

#[test]
fn wrong_shapes_are_rejected() {
    let model = Model::<f64>::new([1, 2, 2], mlp_layers([1, 2, 2], &[3], 2), &mut stream(&[1])).unwrap();
    let mut rng = stream(&[2]);
    let batch = random_batch(&mut rng, 2, [1, 3, 3]);
    let t = vec![SoftLabel::one_hot(0, 2); 2];
    assert!(model.gradients(&batch, &t, false).is_err());
    let batch = random_batch(&mut rng, 2, [1, 2, 2]);
    assert!(model.gradients(&batch, &t[..1], false).is_err());
    assert!(model.gradients(&batch, &[SoftLabel::one_hot(0, 3), SoftLabel::one_hot(1, 3)], false).is_err());
}
