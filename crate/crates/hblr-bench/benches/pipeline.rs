use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use std::hint::black_box;

use hblr_bench::{fitted_msd, msd_regression_pair};
use hblr_core::features::feature_vector;
use hblr_core::posterior::{update_hidden_targets, update_weight_posterior};
use hblr_core::{fit_batch, predict_averaged, Center, HyperParams, LengthScale};

fn feature_evaluation(c: &mut Criterion) {
    let center = Center::new(DVector::from_row_slice(&[0.2, -0.4, 0.5])).unwrap();
    let scale = LengthScale::uniform(3, 0.3).unwrap();
    let mask = vec![true; 4];
    let x = DVector::from_row_slice(&[0.3, -0.1, 0.6]);
    c.bench_function("feature vector, three inputs", |b| {
        b.iter(|| feature_vector(black_box(&x), &center, &scale, &mask).unwrap())
    });
}

fn hidden_target_update(c: &mut Criterion) {
    let n = 1340;
    let m = 3;
    let y = DVector::from_fn(n, |i, _| (i as f64 * 0.01).sin());
    let predictions = DMatrix::from_fn(n, m, |i, j| (i as f64 * 0.01 + j as f64).cos() / 3.0);
    let beta_hats = DVector::from_row_slice(&[4.0, 11.0, 2.5]);
    c.bench_function("hidden targets, 1340 samples x 3 models", |b| {
        b.iter(|| update_hidden_targets(black_box(&y), &predictions, &beta_hats, 1e9).unwrap())
    });
}

fn weight_posterior_update(c: &mut Criterion) {
    let n = 1340;
    let p = 4;
    let phi = DMatrix::from_fn(n, p, |i, j| ((i * (j + 1)) as f64 * 0.003).sin());
    let ef = DVector::from_fn(n, |i, _| (i as f64 * 0.01).cos());
    let alpha = DVector::from_element(p, 1.0);
    c.bench_function("weight posterior, 1340 samples x 4 features", |b| {
        b.iter(|| update_weight_posterior(black_box(&phi), &ef, &alpha, 5.0, 1e-10).unwrap())
    });
}

fn batch_fit(c: &mut Criterion) {
    let (inputs, targets) = msd_regression_pair();
    let params = HyperParams::default();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("full fit, 1340 samples", |b| {
        b.iter(|| fit_batch(black_box(&inputs), &targets, &params).unwrap())
    });
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let (model, params) = fitted_msd();
    let x = DVector::from_row_slice(&[1.0, 0.5, 2.0]);
    c.bench_function("averaged prediction, one query", |b| {
        b.iter(|| predict_averaged(black_box(&x), &model, &params).unwrap())
    });
}

criterion_group!(
    benches,
    feature_evaluation,
    hidden_target_update,
    weight_posterior_update,
    batch_fit,
    prediction
);
criterion_main!(benches);
