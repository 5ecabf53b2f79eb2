//! Shared test oracles, independent of the implementation paths they check:
//! adaptive quadrature for truncated-normal masses, proximal-gradient
//! reference solvers for the lasso and graphical-lasso objectives, and small
//! data generators.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use postsel::lasso_solver::PenaltySpec;
use postsel::model_family::{log_likelihood, score, Dataset, FamilySpec, Response};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const SQRT_2PI: f64 = 2.506628274631000502415765284811;

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        left + right + (left + right - whole) / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, eps / 2.0, depth - 1)
    }
}

/// Standard normal mass on `[a, b]` by adaptive Simpson quadrature.
pub fn phi_mass_quad(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let scale = (phi(a).max(phi(m)).max(phi(b)) * (b - a)).max(1e-280);
    simpson(&phi, a, b, phi(a), phi(m), phi(b), 1e-15 * scale, 40)
}

/// Truncated standard normal CDF by quadrature.
pub fn tn_cdf_quad(a: f64, b: f64, t: f64) -> f64 {
    phi_mass_quad(a, t) / phi_mass_quad(a, b)
}

/// Penalized objective `-loglik + lambda sum |coef_j|` on the unit-dispersion
/// scale (families must carry dispersion 1 here).
pub fn penalized_objective(family: &FamilySpec, data: &Dataset, penalty: &PenaltySpec, coef: &DVector<f64>) -> f64 {
    let eta = &data.x * coef;
    let nll = -log_likelihood(family, data, &eta).unwrap();
    let pen: f64 = penalty.penalized_cols.iter().map(|&j| coef[j].abs()).sum();
    nll + penalty.lambda * pen
}

/// Proximal-gradient (ISTA with backtracking) reference solver for the
/// penalized likelihood problem. Deliberately simple and slow; run to a
/// tight objective tolerance.
pub fn prox_gradient_lasso(
    family: &FamilySpec,
    data: &Dataset,
    penalty: &PenaltySpec,
    max_iter: usize,
) -> (DVector<f64>, f64) {
    let p = data.p();
    let is_pen: Vec<bool> = {
        let mut v = vec![false; p];
        for &j in &penalty.penalized_cols {
            v[j] = true;
        }
        v
    };
    let smooth = |c: &DVector<f64>| -> f64 {
        let eta = &data.x * c;
        -log_likelihood(family, data, &eta).unwrap()
    };
    let grad = |c: &DVector<f64>| -> DVector<f64> {
        let eta = &data.x * c;
        -(data.x.transpose() * score(family, data, &eta).unwrap())
    };
    let prox = |v: &DVector<f64>, step: f64| -> DVector<f64> {
        DVector::from_fn(p, |j, _| {
            if is_pen[j] {
                let t = penalty.lambda * step;
                if v[j] > t {
                    v[j] - t
                } else if v[j] < -t {
                    v[j] + t
                } else {
                    0.0
                }
            } else {
                v[j]
            }
        })
    };

    let mut coef = DVector::zeros(p);
    let mut f = smooth(&coef);
    let mut step = 1.0;
    let mut stall = 0usize;
    let mut obj_prev = f + 0.0;
    for _ in 0..max_iter {
        let g = grad(&coef);
        // backtracking on the smooth majorizer
        let mut cand;
        loop {
            cand = prox(&(&coef - step * &g), step);
            let diff = &cand - &coef;
            let f_cand = smooth(&cand);
            if f_cand <= f + g.dot(&diff) + diff.norm_squared() / (2.0 * step) + 1e-14 * (1.0 + f.abs()) {
                f = f_cand;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        coef = cand;
        let pen: f64 = penalty.penalized_cols.iter().map(|&j| coef[j].abs()).sum();
        let obj = f + penalty.lambda * pen;
        if (obj_prev - obj).abs() <= 1e-14 * (1.0 + obj.abs()) {
            stall += 1;
            if stall >= 30 {
                break;
            }
        } else {
            stall = 0;
        }
        obj_prev = obj;
        step = (step * 1.3).min(1.0e6);
    }
    let obj = penalized_objective(family, data, penalty, &coef);
    (coef, obj)
}

/// Graphical-lasso objective `-log det Theta + tr(S Theta) + lambda * sum of
/// off-diagonal |Theta_jk|` (minimization form).
pub fn glasso_objective(s: &DMatrix<f64>, lambda: f64, theta: &DMatrix<f64>) -> f64 {
    let chol = theta.clone().cholesky().expect("oracle objective needs PD theta");
    let logdet = chol.determinant().ln();
    let tr = (s * theta).trace();
    let mut pen = 0.0;
    for j in 0..theta.nrows() {
        for k in 0..theta.ncols() {
            if j != k {
                pen += theta[(j, k)].abs();
            }
        }
    }
    -logdet + tr + lambda * pen
}

/// Proximal-gradient reference solver for the graphical lasso: gradient on
/// the smooth part `S - Theta^{-1}`, soft-thresholding of the off-diagonal,
/// backtracking past non-PD or insufficient-decrease steps.
pub fn prox_gradient_glasso(s: &DMatrix<f64>, lambda: f64, max_iter: usize) -> (DMatrix<f64>, f64) {
    let p = s.nrows();
    let mut theta = DMatrix::from_diagonal(&DVector::from_fn(p, |j, _| 1.0 / s[(j, j)].max(1e-8)));
    let smooth = |t: &DMatrix<f64>| -> Option<f64> {
        t.clone().cholesky().map(|c| -c.determinant().ln() + (s * t).trace())
    };
    let mut f = smooth(&theta).expect("diagonal start is PD");
    let mut step = 1.0;
    let mut stall = 0;
    let mut obj_prev = f64::INFINITY;
    for _ in 0..max_iter {
        let inv = theta.clone().cholesky().unwrap().inverse();
        let grad = s - &inv;
        let mut cand;
        loop {
            let moved = &theta - step * &grad;
            cand = DMatrix::from_fn(p, p, |j, k| {
                if j == k {
                    moved[(j, k)]
                } else {
                    let t = lambda * step;
                    let v = 0.5 * (moved[(j, k)] + moved[(k, j)]);
                    if v > t {
                        v - t
                    } else if v < -t {
                        v + t
                    } else {
                        0.0
                    }
                }
            });
            let diff = &cand - &theta;
            match smooth(&cand) {
                Some(f_cand)
                    if f_cand
                        <= f + grad.dot(&diff) + diff.norm_squared() / (2.0 * step) + 1e-14 * (1.0 + f.abs()) =>
                {
                    f = f_cand;
                    break;
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-18 {
                        break;
                    }
                }
            }
        }
        theta = cand;
        let obj = f + lambda * offdiag_l1(&theta);
        if (obj_prev - obj).abs() <= 1e-13 * (1.0 + obj.abs()) {
            stall += 1;
            if stall >= 30 {
                break;
            }
        } else {
            stall = 0;
        }
        obj_prev = obj;
        step = (step * 1.2).min(1.0e3);
    }
    let obj = glasso_objective(s, lambda, &theta);
    (theta, obj)
}

fn offdiag_l1(theta: &DMatrix<f64>) -> f64 {
    let mut pen = 0.0;
    for j in 0..theta.nrows() {
        for k in 0..theta.ncols() {
            if j != k {
                pen += theta[(j, k)].abs();
            }
        }
    }
    pen
}

/// Equicorrelated Gaussian feature matrix.
pub fn equicorrelated(n: usize, p: usize, rho: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let g: f64 = rng.sample(rand_distr::StandardNormal);
        for j in 0..p {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            x[(i, j)] = rho.sqrt() * g + (1.0 - rho).sqrt() * e;
        }
    }
    x
}

pub fn gaussian_dataset(n: usize, p: usize, rho: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = equicorrelated(n, p, rho, &mut rng);
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    Dataset::new(x, Response::Continuous(y), vec![]).unwrap()
}

pub fn logistic_dataset(n: usize, p: usize, rho: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = equicorrelated(n, p, rho, &mut rng);
    let y = DVector::from_fn(n, |_, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    Dataset::new(x, Response::Binary(y), vec![]).unwrap()
}

pub fn cox_dataset(n: usize, p: usize, rho: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = equicorrelated(n, p, rho, &mut rng);
    let time = DVector::from_fn(n, |_, _| -rng.gen::<f64>().max(1e-12).ln());
    let status = DVector::from_fn(n, |_, _| if rng.gen_bool(0.7) { 1.0 } else { 0.0 });
    Dataset::new(x, Response::Survival { time, status }, vec![]).unwrap()
}
