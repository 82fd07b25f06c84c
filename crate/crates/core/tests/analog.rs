use bplight_core::analog::*;
use bplight_core::arch::preset;
use bplight_core::device::{DeviceParams, Levels, QuantizedWeights, Sign};
use bplight_core::oracle::*;
use bplight_core::rng;
use bplight_core::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn lenet(seed: u64) -> Model {
    Model::init(&preset("LeNet-A").unwrap(), seed, &InitScheme::default()).unwrap()
}

fn sample(seed: u64) -> (Tensor, Tensor) {
    let mut r = rng::stream(seed, "sample", 0, 0);
    let x = Tensor::new(vec![1, 28, 28], (0..784).map(|_| r.random::<f64>()).collect()).unwrap();
    (x, one_hot(r.random_range(0..10), 10))
}

fn key(sample: u64) -> NoiseKey {
    NoiseKey { seed: 1, phase: 0, sample }
}

/// Largest per-layer discrepancy relative to the layer's peak magnitude.
fn relative_gap(got: &Gradients, want: &Gradients) -> f64 {
    got.iter()
        .zip(want.iter())
        .map(|(g, w)| {
            let peak = w.weights.iter().chain(&w.bias).fold(0.0f64, |m, v| m.max(v.abs()));
            let gap = g
                .weights
                .iter()
                .chain(&g.bias)
                .zip(w.weights.iter().chain(&w.bias))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if peak == 0.0 {
                gap
            } else {
                gap / peak
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn ideal_device_reproduces_oracle_pass_and_update() {
    let dev = DeviceParams::ideal();
    for seed in 0..50 {
        let model = lenet(seed);
        let (x, t) = sample(seed);
        let cache = forward(&model, &x).unwrap();
        let want = backward(&model, &cache, &t).unwrap().gradients;

        let mut am = AnalogModel::program(&model, &dev).unwrap();
        let store = analog_forward(&am, &x, &dev, &key(seed)).unwrap();
        let score_gap = store
            .scores
            .data()
            .iter()
            .zip(cache.scores.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(score_gap <= 1e-9 * cache.scores.peak_abs().max(1e-12), "seed {seed}: scores off by {score_gap}");

        let bp = sample_gradients(&am, &store, &t, &dev, &key(seed)).unwrap();
        let gap = relative_gap(&bp.gradients, &want);
        assert!(gap <= 1e-6, "seed {seed}: gradients off by {gap}");

        let mut reference = model.clone();
        sgd_step(&mut reference, &want, 0.01, 1);
        commit_update(&mut am, &bp.gradients, 0.01, 1);
        for ((a, _), (b, _)) in am.to_model().layers().zip(reference.layers()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-9 * v.abs().max(1e-3), "seed {seed}: update {u} vs {v}");
            }
        }
    }
}

#[test]
fn backward_pass_matches_gradients_then_update() {
    let dev = DeviceParams::default();
    let model = lenet(3);
    let (x, t) = sample(3);
    let mut a = AnalogModel::program(&model, &dev).unwrap();
    let mut b = a.clone();
    let store = analog_forward(&a, &x, &dev, &key(0)).unwrap();
    let params = TrainingParams::default();
    let bp = backward_pass(&mut a, &store, &t, &dev, &params, &key(0)).unwrap();
    commit_update(&mut b, &bp.gradients, params.learning_rate, 1);
    assert_eq!(a, b);
}

#[test]
fn split_factor_cancels() {
    let model = lenet(4);
    let (x, t) = sample(4);
    let run = |split: f64, base: DeviceParams| {
        let dev = DeviceParams { split_factor: split, ..base };
        let am = AnalogModel::program(&model, &dev).unwrap();
        let store = analog_forward(&am, &x, &dev, &key(0)).unwrap();
        sample_gradients(&am, &store, &t, &dev, &key(0)).unwrap()
    };
    for base in [DeviceParams::ideal(), DeviceParams::default()] {
        let (a, b) = (run(1.0 / 32.0, base.clone()), run(1.0 / 4.0, base.clone()));
        assert_eq!(a.deltas, b.deltas);
        assert_eq!(a.gradients, b.gradients);
        let c = run(1.0 / 7.0, base);
        assert!(relative_gap(&a.gradients, &c.gradients) < 1e-12);
    }
}

#[test]
fn matched_target_changes_nothing() {
    let dev = DeviceParams::default();
    let mut am = AnalogModel::program(&lenet(5), &dev).unwrap();
    let (x, _) = sample(5);
    let store = analog_forward(&am, &x, &dev, &key(0)).unwrap();
    let target = store.scores.clone();
    let bp = sample_gradients(&am, &store, &target, &dev, &key(0)).unwrap();
    assert!(bp.gradients.is_zero());
    let before = am.clone();
    commit_update(&mut am, &bp.gradients, 0.5, 1);
    assert_eq!(am, before);
}

#[test]
fn noisy_passes_are_keyed() {
    let dev = DeviceParams::default();
    let am = AnalogModel::program(&lenet(6), &dev).unwrap();
    let (x, _) = sample(6);
    let a = analog_forward(&am, &x, &dev, &key(0)).unwrap();
    let b = analog_forward(&am, &x, &dev, &key(0)).unwrap();
    let c = analog_forward(&am, &x, &dev, &key(1)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.scores, c.scores);
}

#[test]
fn clips_round_trip_reprogramming() {
    let dev = DeviceParams::default();
    let model = lenet(7);
    let am = AnalogModel::program(&model, &dev).unwrap();
    let again = AnalogModel::program_with_clips(&am.to_model(), &dev, &am.clips()).unwrap();
    assert_eq!(again.to_model(), am.to_model());
    assert!(AnalogModel::program_with_clips(&model, &dev, &[1.0]).is_err());
}

#[test]
fn quantized_model_stays_close_to_oracle() {
    let dev = DeviceParams { memristor_states: Levels::Finite(1000), ..DeviceParams::ideal() };
    let model = lenet(8);
    let am = AnalogModel::program(&model, &dev).unwrap();
    for ((a, _), (b, bias)) in am.to_model().layers().zip(model.layers()) {
        let peak = b.iter().chain(bias).fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = 2.0 * peak / (2.0 * 999.0) * (1.0 + 1e-9);
        assert!(a.iter().zip(b).all(|(u, v)| (u - v).abs() <= bound));
    }
}

proptest! {
    #[test]
    fn updates_flip_sign_switch(
        weights in proptest::collection::vec(-1.0f64..1.0, 1..20),
        seed in any::<u64>(),
        lr in 0.1f64..2.0,
    ) {
        let mut q = QuantizedWeights::program(&weights, Levels::Finite(1000), 1.0);
        let mut r = rng::stream(seed, "flip", 0, 0);
        let grads: Vec<f64> = weights.iter().map(|_| r.random_range(-1.0..1.0)).collect();
        let old = q.values();
        weight_update(&mut q, &grads, lr, 1);
        for i in 0..weights.len() {
            let intended = (old[i] - lr * grads[i]).clamp(-1.0, 1.0);
            let sign = if intended >= 0.0 { Sign::P } else { Sign::Q };
            prop_assert_eq!(q.signs[i], sign);
            prop_assert!((q.value(i) - intended).abs() <= 0.5 / 999.0 + 1e-12);
        }
    }
}
