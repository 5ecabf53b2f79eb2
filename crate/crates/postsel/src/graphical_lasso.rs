//! The graphical lasso: l1-penalized sparse precision estimation by block
//! coordinate descent with row/column lasso subproblems, the log-det Hessian
//! over upper-triangular parameters, and selective inference on selected
//! edges through the polyhedral pivot.
//!
//! The objective is `log det Theta - tr(S Theta) - lambda ||Theta||_1` with
//! the penalty on off-diagonal entries only; the diagonal is an unpenalized
//! block. The KKT system is `Sigma_hat - S - lambda Gamma = 0` entrywise
//! with `|Gamma| <= 1` off-diagonal and `Gamma = 0` on the diagonal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal::norm_sf;
use crate::polyhedral::{
    tg_interval, tg_pvalue, truncation_bounds, Alternative, PolyhedralConstraint, TruncatedGaussian,
};
use crate::selective_glm::{SelectiveReport, SelectiveRow};

/// Solver settings for [`fit_glasso`].
#[derive(Debug, Clone, Copy)]
pub struct GlassoControls {
    /// Sweep-to-sweep tolerance on max |delta Theta|.
    pub outer_tol: f64,
    pub max_sweeps: usize,
    /// Coordinate-descent tolerance inside each row/column subproblem.
    pub inner_tol: f64,
    pub max_inner: usize,
    /// Entrywise KKT tolerance certified at convergence.
    pub kkt_tol: f64,
    /// Off-diagonal entries at or below this magnitude are snapped to zero.
    pub edge_threshold: f64,
}

impl Default for GlassoControls {
    fn default() -> Self {
        GlassoControls {
            outer_tol: 1e-8,
            max_sweeps: 1000,
            inner_tol: 1e-12,
            max_inner: 20_000,
            kkt_tol: 1e-6,
            edge_threshold: 1e-9,
        }
    }
}

/// A converged graphical-lasso fit.
#[derive(Debug, Clone)]
pub struct PrecisionFit {
    /// Estimated precision matrix, symmetric positive definite, with exact
    /// zeros off the selected edge set.
    pub theta_hat: DMatrix<f64>,
    /// `theta_hat^{-1}`.
    pub sigma_hat: DMatrix<f64>,
    /// Sample covariance the fit was computed from.
    pub s: DMatrix<f64>,
    /// Number of observations behind `s`.
    pub n: usize,
    pub lambda: f64,
    /// Selected edges `(j, k)` with `j < k`, ascending.
    pub edge_set: Vec<(usize, usize)>,
    /// Signs of `theta_hat` on the selected edges.
    pub signs: Vec<f64>,
    pub names: Vec<String>,
    pub sweeps: usize,
    pub max_kkt_violation: f64,
}

/// Hessian of `-log det Theta(Delta)` over the upper-triangular parameters
/// `Delta_ij (i <= j)` in row-major order, with entries
/// `2 (Sigma_il Sigma_jk + Sigma_ik Sigma_jl)` at `Sigma = Theta_hat^{-1}`.
/// The symmetrization behind this formula counts diagonal parameters twice
/// (`Theta_ii = 2 Delta_ii`), which is immaterial for edge inference.
#[derive(Debug, Clone)]
pub struct GlassoHessian {
    pub r: DMatrix<f64>,
    /// Parameter order: `(0,0), (0,1), ..., (0,p-1), (1,1), ...`.
    pub pairs: Vec<(usize, usize)>,
}

fn check_covariance(s: &DMatrix<f64>) -> Result<()> {
    let p = s.nrows();
    if p == 0 || s.ncols() != p {
        return Err(Error::InvalidInput("covariance must be square and non-empty".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite covariance entries".into()));
    }
    let asym = (s - s.transpose()).amax();
    if asym > 1e-8 * (1.0 + s.amax()) {
        return Err(Error::InvalidInput(format!("covariance not symmetric (max asymmetry {asym:.3e})")));
    }
    if s.diagonal().iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidInput("covariance diagonal must be positive".into()));
    }
    let min_eig = s.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-8 * (1.0 + s.amax()) {
        return Err(Error::InvalidInput(format!("covariance not positive semidefinite (min eigenvalue {min_eig:.3e})")));
    }
    Ok(())
}

/// Coordinate descent on `1/2 b' W11 b - b' s12 + lambda ||b||_1`.
fn column_lasso(
    w11: &DMatrix<f64>,
    s12: &DVector<f64>,
    lambda: f64,
    beta: &mut DVector<f64>,
    controls: &GlassoControls,
) -> Result<()> {
    let m = s12.len();
    let mut v = w11 * &*beta; // W11 beta
    for _sweep in 0..controls.max_inner {
        let mut max_delta = 0.0f64;
        for k in 0..m {
            let d = w11[(k, k)];
            if d <= 0.0 {
                return Err(Error::Singular("nonpositive diagonal in glasso subproblem".into()));
            }
            let rho = s12[k] - (v[k] - d * beta[k]);
            let new = soft(rho, lambda) / d;
            let delta = new - beta[k];
            if delta != 0.0 {
                beta[k] = new;
                v.axpy(delta, &w11.column(k).into_owned(), 1.0);
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < controls.inner_tol {
            return Ok(());
        }
    }
    Err(Error::NonConvergence { iterations: controls.max_inner, violation: f64::NAN })
}

fn soft(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Entrywise KKT violation of `(theta, sigma = theta^{-1})` against `s`.
fn kkt_violation(s: &DMatrix<f64>, sigma: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64, edge_threshold: f64) -> f64 {
    let p = s.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for k in 0..p {
            let diff = sigma[(j, k)] - s[(j, k)];
            let v = if j == k {
                diff.abs()
            } else if theta[(j, k)].abs() > edge_threshold {
                (diff - lambda * theta[(j, k)].signum()).abs()
            } else {
                (diff.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Fit the graphical lasso from a sample covariance and its sample size.
pub fn fit_glasso(s: &DMatrix<f64>, n: usize, lambda: f64, controls: &GlassoControls) -> Result<PrecisionFit> {
    fit_glasso_named(s, n, lambda, controls, None)
}

/// Fit from raw data rows: columns are mean-centered and `S = Xc' Xc / n`.
pub fn fit_glasso_data(x: &DMatrix<f64>, lambda: f64, controls: &GlassoControls) -> Result<PrecisionFit> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 rows".into()));
    }
    let p = x.ncols();
    let mut xc = x.clone();
    for j in 0..p {
        let mean = xc.column(j).mean();
        for i in 0..n {
            xc[(i, j)] -= mean;
        }
    }
    let s = xc.transpose() * &xc / n as f64;
    fit_glasso(&s, n, lambda, controls)
}

pub fn fit_glasso_named(
    s: &DMatrix<f64>,
    n: usize,
    lambda: f64,
    controls: &GlassoControls,
    names: Option<Vec<String>>,
) -> Result<PrecisionFit> {
    check_covariance(s)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput("need n >= 2".into()));
    }
    let p = s.nrows();
    let names = names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
    if names.len() != p {
        return Err(Error::InvalidInput("one name per variable required".into()));
    }

    // running estimate of Sigma_hat; diagonal pinned to S (unpenalized)
    let mut w = s.clone();
    let mut betas: Vec<DVector<f64>> = vec![DVector::zeros(p - 1); p];
    let mut theta = DMatrix::zeros(p, p);
    let mut prev_theta: Option<DMatrix<f64>> = None;
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut last_violation = f64::INFINITY;

    while sweeps < controls.max_sweeps {
        sweeps += 1;
        for j in 0..p {
            let rest: Vec<usize> = (0..p).filter(|&r| r != j).collect();
            let mut w11 = DMatrix::zeros(p - 1, p - 1);
            let mut s12 = DVector::zeros(p - 1);
            for (a, &ra) in rest.iter().enumerate() {
                s12[a] = s[(ra, j)];
                for (b, &rb) in rest.iter().enumerate() {
                    w11[(a, b)] = w[(ra, rb)];
                }
            }
            column_lasso(&w11, &s12, lambda, &mut betas[j], controls)?;
            let w12 = &w11 * &betas[j];
            for (a, &ra) in rest.iter().enumerate() {
                w[(ra, j)] = w12[a];
                w[(j, ra)] = w12[a];
            }
            let denom = w[(j, j)] - w12.dot(&betas[j]);
            if denom <= 0.0 {
                return Err(Error::Numerical("glasso lost positive definiteness".into()));
            }
            theta[(j, j)] = 1.0 / denom;
            for (a, &ra) in rest.iter().enumerate() {
                let v = -betas[j][a] / denom;
                theta[(ra, j)] = v;
            }
        }
        // symmetrize the freshly rebuilt precision
        for a in 0..p {
            for b in (a + 1)..p {
                let v = 0.5 * (theta[(a, b)] + theta[(b, a)]);
                theta[(a, b)] = v;
                theta[(b, a)] = v;
            }
        }
        let theta_change = prev_theta.as_ref().map(|t| (&theta - t).amax()).unwrap_or(f64::INFINITY);
        prev_theta = Some(theta.clone());
        if theta_change < controls.outer_tol {
            let chol = theta
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical("estimated precision not positive definite".into()))?;
            let sigma = chol.inverse();
            last_violation = kkt_violation(s, &sigma, &theta, lambda, controls.edge_threshold);
            if last_violation <= controls.kkt_tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: sweeps, violation: last_violation });
    }

    // snap sub-threshold off-diagonal dust to exact zeros
    for a in 0..p {
        for b in 0..p {
            if a != b && theta[(a, b)].abs() <= controls.edge_threshold {
                theta[(a, b)] = 0.0;
            }
        }
    }
    let chol = theta
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("estimated precision not positive definite".into()))?;
    let sigma_hat = chol.inverse();
    let max_kkt_violation = kkt_violation(s, &sigma_hat, &theta, lambda, controls.edge_threshold);

    let mut edge_set = Vec::new();
    let mut signs = Vec::new();
    for j in 0..p {
        for k in (j + 1)..p {
            if theta[(j, k)] != 0.0 {
                edge_set.push((j, k));
                signs.push(theta[(j, k)].signum());
            }
        }
    }

    Ok(PrecisionFit {
        theta_hat: theta,
        sigma_hat,
        s: s.clone(),
        n,
        lambda,
        edge_set,
        signs,
        names,
        sweeps,
        max_kkt_violation,
    })
}

/// Index of `(i, j)`, `i <= j`, in the row-major upper-triangular order.
fn upper_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < p);
    i * p - i * (i + 1) / 2 + j
}

/// The log-det Hessian over all upper-triangular parameters.
pub fn glasso_hessian(fit: &PrecisionFit) -> GlassoHessian {
    let p = fit.sigma_hat.nrows();
    let q = p * (p + 1) / 2;
    let mut pairs = Vec::with_capacity(q);
    for i in 0..p {
        for j in i..p {
            pairs.push((i, j));
        }
    }
    let mut r = DMatrix::zeros(q, q);
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for (b, &(k, l)) in pairs.iter().enumerate() {
            r[(a, b)] = hessian_entry(&fit.sigma_hat, i, j, k, l);
        }
    }
    debug_assert_eq!(upper_index(p, pairs[q - 1].0, pairs[q - 1].1), q - 1);
    GlassoHessian { r, pairs }
}

fn hessian_entry(sigma: &DMatrix<f64>, i: usize, j: usize, k: usize, l: usize) -> f64 {
    2.0 * (sigma[(i, l)] * sigma[(j, k)] + sigma[(i, k)] * sigma[(j, l)])
}

/// Options for [`glasso_infer`].
#[derive(Debug, Clone)]
pub struct GlassoInferOptions {
    pub level: f64,
    pub null_value: f64,
}

impl Default for GlassoInferOptions {
    fn default() -> Self {
        GlassoInferOptions { level: 0.90, null_value: 0.0 }
    }
}

/// Internal pieces of the edge one-step estimator, exposed for tests and the
/// simulation harness.
pub(crate) struct GlassoOneStep {
    /// Block parameter order: all diagonals, then the selected edges.
    pub block_pairs: Vec<(usize, usize)>,
    pub n_diag: usize,
    /// One-step estimate over the block.
    pub estimate: DVector<f64>,
    /// Active-constraint shift over the block.
    pub offset: DVector<f64>,
    /// Pivot covariance `((n/2) R_block)^{-1}`.
    pub covariance: DMatrix<f64>,
}

pub(crate) fn glasso_one_step(fit: &PrecisionFit) -> Result<GlassoOneStep> {
    if fit.edge_set.is_empty() {
        return Err(Error::NothingSelected);
    }
    let p = fit.theta_hat.nrows();
    let mut block_pairs: Vec<(usize, usize)> = (0..p).map(|i| (i, i)).collect();
    block_pairs.extend(fit.edge_set.iter().cloned());
    let n_diag = p;
    let q = block_pairs.len();

    let mut r_block = DMatrix::zeros(q, q);
    for a in 0..q {
        let (i, j) = block_pairs[a];
        for b in 0..q {
            let (k, l) = block_pairs[b];
            r_block[(a, b)] = hessian_entry(&fit.sigma_hat, i, j, k, l);
        }
    }
    let chol = r_block
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("degenerate edge information".into()))?;

    // Block one-step in the R parameterization. The selected-model KKT gives
    // the gradient (0_diag, 2 lambda s) on the block, so the shift is
    // 2 lambda R^{-1} (0, s); the paper's display drops the factor that the
    // doubled off-diagonal penalty contributes.
    let mut u = DVector::zeros(q);
    for (e, sign) in fit.signs.iter().enumerate() {
        u[n_diag + e] = *sign;
    }
    let offset = chol.solve(&u) * (2.0 * fit.lambda);
    let theta_block = DVector::from_iterator(q, block_pairs.iter().map(|&(i, j)| fit.theta_hat[(i, j)]));
    let estimate = &theta_block + &offset;
    let covariance = chol.inverse() * (2.0 / fit.n as f64);

    Ok(GlassoOneStep { block_pairs, n_diag, estimate, offset, covariance })
}

pub(crate) fn glasso_constraints(fit: &PrecisionFit, one_step: &GlassoOneStep) -> PolyhedralConstraint {
    let m = fit.edge_set.len();
    let q = one_step.block_pairs.len();
    let k = one_step.n_diag;
    let mut a = DMatrix::zeros(m, q);
    let mut b = DVector::zeros(m);
    for e in 0..m {
        a[(e, k + e)] = -fit.signs[e];
        b[e] = -fit.signs[e] * one_step.offset[k + e];
    }
    PolyhedralConstraint::new(a, b).expect("finite constraint entries")
}

/// Selective p-values and intervals for every selected edge, with naive Wald
/// comparisons, conditioning on the observed edge signs.
pub fn glasso_infer(fit: &PrecisionFit, options: &GlassoInferOptions) -> Result<SelectiveReport> {
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidInput(format!("level must be in (0,1), got {}", options.level)));
    }
    let os = glasso_one_step(fit)?;
    let constr = glasso_constraints(fit, &os);
    let q = os.block_pairs.len();
    let mut rows = Vec::with_capacity(fit.edge_set.len());
    for (e, &(j, k)) in fit.edge_set.iter().enumerate() {
        let idx = os.n_diag + e;
        let value = os.estimate[idx];
        let var = os.covariance[(idx, idx)];
        let se = var.max(0.0).sqrt();
        let naive_p = if se > 0.0 {
            (2.0 * norm_sf((value - options.null_value).abs() / se)).clamp(0.0, 1.0)
        } else {
            f64::NAN
        };
        let mut gamma = DVector::zeros(q);
        gamma[idx] = 1.0;
        let name = format!("{}-{}", fit.names[j], fit.names[k]);
        let built = (|| -> Result<SelectiveRow> {
            let bounds = truncation_bounds(&constr, &os.covariance, &gamma, &os.estimate)?;
            let tg = TruncatedGaussian::new(options.null_value, var, bounds.vlo, bounds.vhi)?;
            let pvalue = tg_pvalue(&tg, value, Alternative::TwoSided)?;
            let (ci_lo, ci_hi) = tg_interval(var, bounds.vlo, bounds.vhi, value, options.level)?;
            Ok(SelectiveRow {
                col: upper_index(fit.theta_hat.nrows(), j, k),
                name: name.clone(),
                beta_bar: value,
                stderr: se,
                vlo: bounds.vlo,
                vhi: bounds.vhi,
                pvalue: Some(pvalue),
                ci_lo,
                ci_hi,
                naive_pvalue: naive_p,
                penalized: true,
                degenerate: false,
            })
        })();
        match built {
            Ok(r) => rows.push(r),
            Err(Error::DegenerateTruncation(_)) | Err(Error::Numerical(_)) | Err(Error::InvalidInput(_)) => {
                rows.push(SelectiveRow {
                    col: upper_index(fit.theta_hat.nrows(), j, k),
                    name,
                    beta_bar: value,
                    stderr: se,
                    vlo: f64::NAN,
                    vhi: f64::NAN,
                    pvalue: None,
                    ci_lo: f64::NAN,
                    ci_hi: f64::NAN,
                    naive_pvalue: naive_p,
                    penalized: true,
                    degenerate: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SelectiveReport {
        rows,
        lambda: fit.lambda,
        family: "glasso".to_string(),
        covariance_method: "plugin".to_string(),
        level: options.level,
        sigma2: 1.0,
    })
}
