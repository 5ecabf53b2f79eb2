//! Benchmarks for the hot paths: the penalized IRLS solver, the truncated
//! Gaussian pivot, polyhedral truncation limits, and the graphical lasso.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use postsel::graphical_lasso::{fit_glasso, GlassoControls};
use postsel::lasso_solver::{fit_lasso, PenaltySpec, SolverControls};
use postsel::model_family::{Dataset, FamilySpec, Response};
use postsel::polyhedral::{tg_cdf, truncation_bounds, PolyhedralConstraint, TruncatedGaussian};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn logistic_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        let eta = 1.5 * x[(i, 0)] - x[(i, 1)];
        if rng.gen::<f64>() < 1.0 / (1.0 + (-eta as f64).exp()) {
            1.0
        } else {
            0.0
        }
    });
    Dataset::new(x, Response::Binary(y), vec![]).unwrap()
}

fn bench_fit_lasso(c: &mut Criterion) {
    let data = logistic_data(100, 20, 1);
    let family = FamilySpec::logistic();
    let penalty = PenaltySpec::new(4.0, &data).unwrap();
    let controls = SolverControls::default();
    c.bench_function("fit_lasso_logistic_n100_p20", |b| {
        b.iter(|| fit_lasso(&family, black_box(&data), &penalty, &controls).unwrap())
    });
}

fn bench_tg_cdf(c: &mut Criterion) {
    let tg = TruncatedGaussian::new(0.0, 1.0, 1.0, 4.0).unwrap();
    c.bench_function("tg_cdf_moderate", |b| b.iter(|| tg_cdf(&tg, black_box(1.7)).unwrap()));
    let deep = TruncatedGaussian::new(0.0, 1.0, 12.0, 15.0).unwrap();
    c.bench_function("tg_cdf_deep_tail", |b| b.iter(|| tg_cdf(&deep, black_box(12.5)).unwrap()));
}

fn bench_truncation_bounds(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = 8;
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let sigma = &m * m.transpose() + DMatrix::identity(d, d);
    let y = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let gamma = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let a = DMatrix::from_fn(12, d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let mut b_vec = &a * &y;
    for j in 0..12 {
        b_vec[j] += 0.5 + rng.gen::<f64>();
    }
    let constr = PolyhedralConstraint::new(a, b_vec).unwrap();
    c.bench_function("truncation_bounds_d8_m12", |b| {
        b.iter(|| truncation_bounds(&constr, black_box(&sigma), &gamma, &y).unwrap())
    });
}

fn bench_glasso(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200;
    let p = 20;
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let s = x.transpose() * &x / n as f64;
    let controls = GlassoControls::default();
    c.bench_function("fit_glasso_p20", |b| b.iter(|| fit_glasso(black_box(&s), n, 0.2, &controls).unwrap()));
}

criterion_group!(benches, bench_fit_lasso, bench_tg_cdf, bench_truncation_bounds, bench_glasso);
criterion_main!(benches);
