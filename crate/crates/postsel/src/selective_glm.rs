//! Post-selection inference for penalized GLM/Cox fits: the one-step
//! estimator in the selected model, its plug-in / pairs-bootstrap / sandwich
//! covariance, the active-sign polyhedral constraints, and per-coordinate
//! selective p-values and intervals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso_solver::LassoFit;
use crate::model_family::{
    eta_for, score_residuals, submatrix, working_information, working_score, Dataset, FamilyKind, FamilySpec,
    Response,
};
use crate::normal::{norm_quantile, norm_sf};
use crate::polyhedral::{
    tg_interval, tg_pvalue, truncation_bounds, Alternative, PolyhedralConstraint, TruncatedGaussian,
};

/// How to estimate the covariance of the one-step estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceMethod {
    /// Inverse observed information at the penalized fit.
    Plugin,
    /// Empirical covariance of the one-step estimator over row resamples,
    /// selection held fixed.
    PairsBootstrap { replicates: usize, seed: u64 },
    /// Information sandwich with per-observation score outer products.
    Sandwich,
}

impl CovarianceMethod {
    pub fn label(&self) -> &'static str {
        match self {
            CovarianceMethod::Plugin => "plugin",
            CovarianceMethod::PairsBootstrap { .. } => "pairs_bootstrap",
            CovarianceMethod::Sandwich => "sandwich",
        }
    }
}

/// One Newton-Raphson step in the selected model from the penalized fit,
/// over the block (unpenalized columns, active columns).
#[derive(Debug, Clone)]
pub struct OneStepEstimate {
    /// Columns of the block: unpenalized first, then the active set.
    pub block_cols: Vec<usize>,
    /// Number of unpenalized columns leading the block.
    pub n_unpenalized: usize,
    /// Full block estimate `(alpha_bar, beta_bar)`.
    pub estimate: DVector<f64>,
    /// Unpenalized part of `estimate`.
    pub alpha_bar: DVector<f64>,
    /// Active part of `estimate`.
    pub beta_bar: DVector<f64>,
    /// Plug-in covariance `I^{-1}` (dispersion included); replaced by the
    /// bootstrap/sandwich estimate downstream when requested.
    pub covariance: DMatrix<f64>,
    /// The active-constraint shift `I_w^{-1} (0, lambda s)`, full block.
    pub offset: DVector<f64>,
    pub active_set: Vec<usize>,
    pub signs: Vec<f64>,
    pub lambda: f64,
    /// Gaussian dispersion used in the covariance (1 for other families).
    pub sigma2: f64,
}

/// Per-variable inference row.
#[derive(Debug, Clone)]
pub struct SelectiveRow {
    pub col: usize,
    pub name: String,
    pub beta_bar: f64,
    pub stderr: f64,
    pub vlo: f64,
    pub vhi: f64,
    /// Selective p-value; `None` when the truncation was degenerate.
    pub pvalue: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Unadjusted Wald p-value for comparison.
    pub naive_pvalue: f64,
    /// False for unpenalized variables, which get naive Wald inference only.
    pub penalized: bool,
    pub degenerate: bool,
}

/// Full inference report for a fit.
#[derive(Debug, Clone)]
pub struct SelectiveReport {
    pub rows: Vec<SelectiveRow>,
    pub lambda: f64,
    pub family: String,
    pub covariance_method: String,
    pub level: f64,
    pub sigma2: f64,
}

/// Options for [`infer`].
#[derive(Debug, Clone)]
pub struct InferOptions {
    /// Confidence level of the reported intervals.
    pub level: f64,
    pub covariance_method: CovarianceMethod,
    /// Null values per active coordinate (in active-set order); zeros when
    /// unset.
    pub null_values: Option<Vec<f64>>,
    pub alternative: Alternative,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            level: 0.90,
            covariance_method: CovarianceMethod::Plugin,
            null_values: None,
            alternative: Alternative::TwoSided,
        }
    }
}

fn family_label(kind: FamilyKind) -> &'static str {
    match kind {
        FamilyKind::Gaussian => "gaussian",
        FamilyKind::Logistic => "logistic",
        FamilyKind::Cox => "cox",
    }
}

fn block_cols(data: &Dataset, fit: &LassoFit) -> (Vec<usize>, usize) {
    let mut cols = data.unpenalized_cols.clone();
    let k = cols.len();
    cols.extend(fit.active_set.iter().cloned());
    (cols, k)
}

fn block_coef(fit: &LassoFit, cols: &[usize]) -> DVector<f64> {
    DVector::from_iterator(cols.len(), cols.iter().map(|&j| fit.beta_hat[j]))
}

/// Gaussian dispersion: supplied, or the residual mean square of the
/// selected-model fit when `n > q`.
fn resolve_sigma2(
    family: &FamilySpec,
    data: &Dataset,
    cols: &[usize],
    estimate: &DVector<f64>,
) -> Result<f64> {
    match family.kind {
        FamilyKind::Gaussian => {
            if let Some(s2) = family.dispersion {
                if !(s2 > 0.0) {
                    return Err(Error::InvalidInput(format!("sigma2 must be positive, got {s2}")));
                }
                return Ok(s2);
            }
            let n = data.n();
            let q = cols.len();
            if n <= q {
                return Err(Error::InvalidInput(
                    "gaussian inference with n <= selected size requires a supplied sigma2".into(),
                ));
            }
            let y = match &data.response {
                Response::Continuous(y) => y,
                _ => unreachable!(),
            };
            let eta = eta_for(data, cols, estimate);
            let rss = (y - eta).norm_squared();
            Ok(rss / (n - q) as f64)
        }
        _ => Ok(1.0),
    }
}

/// The one-step estimator `(alpha_bar, beta_bar) = (alpha_hat, beta_hat_M) +
/// I_w^{-1} (0, lambda s_M)` with plug-in covariance `sigma2 * I_w^{-1}`.
pub fn one_step(family: &FamilySpec, data: &Dataset, fit: &LassoFit) -> Result<OneStepEstimate> {
    if fit.active_set.is_empty() {
        return Err(Error::NothingSelected);
    }
    let (cols, k) = block_cols(data, fit);
    let coef = block_coef(fit, &cols);
    let info = working_information(family, data, &cols, &coef)?;
    let chol = info
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("degenerate selected information".into()))?;
    let mut rhs = DVector::zeros(cols.len());
    for (i, s) in fit.signs.iter().enumerate() {
        rhs[k + i] = fit.lambda * s;
    }
    let offset = chol.solve(&rhs);
    let estimate = &coef + &offset;
    let sigma2 = resolve_sigma2(family, data, &cols, &estimate)?;
    let inv = chol.inverse();
    let covariance = &inv * sigma2;

    Ok(OneStepEstimate {
        alpha_bar: estimate.rows(0, k).into_owned(),
        beta_bar: estimate.rows(k, cols.len() - k).into_owned(),
        estimate,
        covariance,
        offset,
        block_cols: cols,
        n_unpenalized: k,
        active_set: fit.active_set.clone(),
        signs: fit.signs.clone(),
        lambda: fit.lambda,
        sigma2,
    })
}

/// The observed active-sign event as a polyhedron in the block estimate:
/// `A = -diag(s) E_M`, `b = -diag(s) E_M I_w^{-1} (0, lambda s)`, so that
/// `A (alpha_bar, beta_bar) <= b` iff `diag(s)(beta_bar - offset_M) >= 0`.
pub fn active_constraints(est: &OneStepEstimate) -> PolyhedralConstraint {
    let m = est.active_set.len();
    let q = est.block_cols.len();
    let k = est.n_unpenalized;
    let mut a = DMatrix::zeros(m, q);
    let mut b = DVector::zeros(m);
    for i in 0..m {
        a[(i, k + i)] = -est.signs[i];
        b[i] = -est.signs[i] * est.offset[k + i];
    }
    PolyhedralConstraint::new(a, b).expect("constraint entries are finite by construction")
}

/// Pairs-bootstrap covariance of the one-step estimator: rows are resampled
/// with replacement, the one-step estimator is recomputed from the original
/// penalized coefficients with `(M, s_M)` held fixed, and the empirical
/// covariance of the replicates is returned. Replicates with singular
/// selected information are dropped; more than 10% dropped is an error.
pub fn pairs_bootstrap_cov(
    family: &FamilySpec,
    data: &Dataset,
    fit: &LassoFit,
    replicates: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    use rand::{Rng, SeedableRng};

    if replicates < 100 {
        return Err(Error::InvalidInput(format!("pairs bootstrap needs at least 100 replicates, got {replicates}")));
    }
    if fit.active_set.is_empty() {
        return Err(Error::NothingSelected);
    }
    let (cols, _) = block_cols(data, fit);
    let coef = block_coef(fit, &cols);
    let n = data.n();

    let draws: Vec<Option<DVector<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resampled = resample_rows(data, &rows);
            one_step_at(family, &resampled, &cols, &coef).ok()
        })
        .collect();

    let kept: Vec<&DVector<f64>> = draws.iter().flatten().collect();
    let dropped = replicates - kept.len();
    if dropped * 10 > replicates {
        return Err(Error::Numerical(format!(
            "pairs bootstrap dropped {dropped}/{replicates} replicates with singular information"
        )));
    }
    let q = cols.len();
    let mut mean = DVector::zeros(q);
    for d in &kept {
        mean += *d;
    }
    mean /= kept.len() as f64;
    let mut cov = DMatrix::zeros(q, q);
    for d in &kept {
        let c = *d - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov /= (kept.len() - 1) as f64;
    // syger fills the lower triangle; mirror it
    for i in 0..q {
        for j in (i + 1)..q {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    Ok(cov)
}

/// One Newton step in the selected model from `coef` on (possibly resampled)
/// data: `coef + I_w^{-1} X_B' g`.
fn one_step_at(family: &FamilySpec, data: &Dataset, cols: &[usize], coef: &DVector<f64>) -> Result<DVector<f64>> {
    let info = working_information(family, data, cols, coef)?;
    let chol = info.cholesky().ok_or_else(|| Error::Singular("singular replicate information".into()))?;
    let eta = eta_for(data, cols, coef);
    let g = working_score(family, data, &eta)?;
    let xb = submatrix(&data.x, cols);
    let grad = xb.transpose() * g;
    Ok(coef + chol.solve(&grad))
}

fn resample_rows(data: &Dataset, rows: &[usize]) -> Dataset {
    let mut x = DMatrix::zeros(rows.len(), data.p());
    for (i, &r) in rows.iter().enumerate() {
        x.row_mut(i).copy_from(&data.x.row(r));
    }
    let response = match &data.response {
        Response::Continuous(y) => {
            Response::Continuous(DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r])))
        }
        Response::Binary(y) => Response::Binary(DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]))),
        Response::Survival { time, status } => Response::Survival {
            time: DVector::from_iterator(rows.len(), rows.iter().map(|&r| time[r])),
            status: DVector::from_iterator(rows.len(), rows.iter().map(|&r| status[r])),
        },
    };
    Dataset {
        x,
        response,
        unpenalized_cols: data.unpenalized_cols.clone(),
        names: data.names.clone(),
    }
}

/// Information sandwich `I^{-1} (sum_i g_i g_i') I^{-1}` over the selected
/// block, scores and information evaluated at the one-step estimate.
pub fn sandwich_cov(family: &FamilySpec, data: &Dataset, fit: &LassoFit) -> Result<DMatrix<f64>> {
    if fit.active_set.is_empty() {
        return Err(Error::NothingSelected);
    }
    let est = one_step(family, data, fit)?;
    let cols = &est.block_cols;
    let info = working_information(family, data, cols, &est.estimate)?;
    let chol = info.cholesky().ok_or_else(|| Error::Singular("degenerate selected information".into()))?;
    let resid = score_residuals(family, data, cols, &est.estimate)?;
    let meat = resid.transpose() * &resid;
    let bread = chol.inverse();
    let mut cov = &bread * meat * &bread;
    // symmetrize away accumulation dust
    let q = cov.nrows();
    for i in 0..q {
        for j in (i + 1)..q {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Selective inference for every selected coordinate of a fit, plus naive
/// Wald rows for the unpenalized block.
pub fn infer(family: &FamilySpec, data: &Dataset, fit: &LassoFit, options: &InferOptions) -> Result<SelectiveReport> {
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidInput(format!("level must be in (0,1), got {}", options.level)));
    }
    let est = one_step(family, data, fit)?;
    let sigma = match options.covariance_method {
        CovarianceMethod::Plugin => est.covariance.clone(),
        CovarianceMethod::PairsBootstrap { replicates, seed } => {
            pairs_bootstrap_cov(family, data, fit, replicates, seed)?
        }
        CovarianceMethod::Sandwich => sandwich_cov(family, data, fit)?,
    };
    if let Some(nulls) = &options.null_values {
        if nulls.len() != est.active_set.len() {
            return Err(Error::InvalidInput("one null value per active coordinate required".into()));
        }
    }
    let constr = active_constraints(&est);
    let k = est.n_unpenalized;
    let q = est.block_cols.len();
    let z_alpha = norm_quantile(1.0 - (1.0 - options.level) / 2.0);

    let mut rows = Vec::with_capacity(q);
    for idx in 0..q {
        let col = est.block_cols[idx];
        let value = est.estimate[idx];
        let var = sigma[(idx, idx)];
        let se = var.max(0.0).sqrt();
        let penalized = idx >= k;
        let null = if penalized {
            options.null_values.as_ref().map_or(0.0, |v| v[idx - k])
        } else {
            0.0
        };
        let naive_p = if se > 0.0 { (2.0 * norm_sf((value - null).abs() / se)).clamp(0.0, 1.0) } else { f64::NAN };

        if !penalized {
            // unpenalized coordinates: naive Wald only, no truncation
            rows.push(SelectiveRow {
                col,
                name: data.names[col].clone(),
                beta_bar: value,
                stderr: se,
                vlo: f64::NEG_INFINITY,
                vhi: f64::INFINITY,
                pvalue: Some(naive_p),
                ci_lo: value - z_alpha * se,
                ci_hi: value + z_alpha * se,
                naive_pvalue: naive_p,
                penalized: false,
                degenerate: false,
            });
            continue;
        }

        let mut gamma = DVector::zeros(q);
        gamma[idx] = 1.0;
        let row = (|| -> Result<SelectiveRow> {
            let bounds = truncation_bounds(&constr, &sigma, &gamma, &est.estimate)?;
            let tg = TruncatedGaussian::new(null, var, bounds.vlo, bounds.vhi)?;
            let pvalue = tg_pvalue(&tg, value, options.alternative)?;
            let (ci_lo, ci_hi) = tg_interval(var, bounds.vlo, bounds.vhi, value, options.level)?;
            Ok(SelectiveRow {
                col,
                name: data.names[col].clone(),
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
        match row {
            Ok(r) => rows.push(r),
            Err(Error::DegenerateTruncation(_)) | Err(Error::Numerical(_)) | Err(Error::InvalidInput(_)) => {
                // report the coordinate, flag it, keep the others
                rows.push(SelectiveRow {
                    col,
                    name: data.names[col].clone(),
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
        family: family_label(family.kind).to_string(),
        covariance_method: options.covariance_method.label().to_string(),
        level: options.level,
        sigma2: est.sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso_solver::{fit_lasso, lambda_max, PenaltySpec, SolverControls};
    use crate::model_family::local_quadratic;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        Dataset::new(x, Response::Continuous(y), vec![]).unwrap()
    }

    fn logistic_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = DVector::from_fn(n, |_, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        Dataset::new(x, Response::Binary(y), vec![]).unwrap()
    }

    fn moderate_fit(family: &FamilySpec, data: &Dataset, frac: f64) -> (LassoFit, PenaltySpec) {
        let pen = PenaltySpec::new(0.0, data).unwrap();
        let lmax = lambda_max(family, data, &pen).unwrap();
        let pen = pen.with_lambda(frac * lmax);
        let fit = fit_lasso(family, data, &pen, &SolverControls::tight()).unwrap();
        (fit, pen)
    }

    #[test]
    fn empty_selection_errors() {
        let data = gaussian_data(20, 5, 1);
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let (fit, _) = moderate_fit(&fam, &data, 1.05);
        assert!(fit.active_set.is_empty());
        assert!(matches!(one_step(&fam, &data, &fit), Err(Error::NothingSelected)));
    }

    #[test]
    fn gaussian_one_step_is_ols_on_active() {
        let data = gaussian_data(40, 6, 2);
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let (fit, _) = moderate_fit(&fam, &data, 0.4);
        assert!(!fit.active_set.is_empty());
        let est = one_step(&fam, &data, &fit).unwrap();
        let y = match &data.response {
            Response::Continuous(y) => y.clone(),
            _ => unreachable!(),
        };
        let xm = submatrix(&data.x, &est.block_cols);
        let ols = (xm.transpose() * &xm).cholesky().unwrap().solve(&(xm.transpose() * y));
        for i in 0..est.estimate.len() {
            assert_relative_eq!(est.estimate[i], ols[i], max_relative = 1e-9, epsilon = 1e-11);
        }
    }

    #[test]
    fn one_step_shrinks_to_fit_as_lambda_vanishes() {
        let data = gaussian_data(50, 4, 3);
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let pen = PenaltySpec::new(1e-6, &data).unwrap();
        let fit = fit_lasso(&fam, &data, &pen, &SolverControls::tight()).unwrap();
        assert_eq!(fit.active_set.len(), 4);
        let est = one_step(&fam, &data, &fit).unwrap();
        let coef = block_coef(&fit, &est.block_cols);
        assert!((est.estimate - coef).amax() < 1e-4);
    }

    #[test]
    fn dual_form_identity_logistic() {
        // Eq-style identity: beta_bar equals (X'WX)^{-1} X'Wz at the
        // penalized fit, evaluated independently from the local quadratic
        let data = logistic_data(60, 8, 4);
        let fam = FamilySpec::logistic();
        let (fit, _) = moderate_fit(&fam, &data, 0.35);
        assert!(!fit.active_set.is_empty());
        let est = one_step(&fam, &data, &fit).unwrap();

        let coef = block_coef(&fit, &est.block_cols);
        let eta = eta_for(&data, &est.block_cols, &coef);
        let lq = local_quadratic(&fam, &data, &eta).unwrap();
        let xm = submatrix(&data.x, &est.block_cols);
        let wx = lq.weights.mul_mat(&xm);
        let wls = (xm.transpose() * &wx)
            .cholesky()
            .unwrap()
            .solve(&(wx.transpose() * &lq.z));
        for i in 0..est.estimate.len() {
            assert_relative_eq!(est.estimate[i], wls[i], max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    #[test]
    fn one_step_identity_exact() {
        // beta_bar - beta_hat = I_w^{-1} (0, lambda s) by construction;
        // verify against a fresh information solve
        let data = logistic_data(50, 6, 5);
        let fam = FamilySpec::logistic();
        let (fit, _) = moderate_fit(&fam, &data, 0.3);
        let est = one_step(&fam, &data, &fit).unwrap();
        let coef = block_coef(&fit, &est.block_cols);
        let info = working_information(&fam, &data, &est.block_cols, &coef).unwrap();
        let mut rhs = DVector::zeros(est.block_cols.len());
        for (i, s) in fit.signs.iter().enumerate() {
            rhs[est.n_unpenalized + i] = fit.lambda * s;
        }
        let shift = info.cholesky().unwrap().solve(&rhs);
        let lhs = &est.estimate - &coef;
        for i in 0..lhs.len() {
            assert_relative_eq!(lhs[i], shift[i], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn constraints_scalar_case() {
        // |M| = 1, s = +1: A = [-1], b = -lambda (X_j'X_j)^{-1}
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 30;
        let xcol = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = &xcol * 0.9 + DVector::from_fn(n, |_, _| 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal));
        let data = Dataset::new(DMatrix::from_column_slice(n, 1, xcol.as_slice()), Response::Continuous(y), vec![]).unwrap();
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let pen = PenaltySpec::new(1.0, &data).unwrap();
        let fit = fit_lasso(&fam, &data, &pen, &SolverControls::tight()).unwrap();
        assert_eq!(fit.active_set, vec![0]);
        assert_eq!(fit.signs, vec![1.0]);
        let est = one_step(&fam, &data, &fit).unwrap();
        let constr = active_constraints(&est);
        assert_eq!(constr.a.nrows(), 1);
        assert_relative_eq!(constr.a[(0, 0)], -1.0);
        let gram = xcol.norm_squared();
        assert_relative_eq!(constr.b[0], -1.0 / gram, max_relative = 1e-10);
    }

    #[test]
    fn constraints_feasible_at_estimate() {
        for seed in 0..5u64 {
            let data = logistic_data(50, 8, 40 + seed);
            let fam = FamilySpec::logistic();
            let (fit, _) = moderate_fit(&fam, &data, 0.3);
            if fit.active_set.is_empty() {
                continue;
            }
            let est = one_step(&fam, &data, &fit).unwrap();
            let constr = active_constraints(&est);
            assert!(
                constr.max_violation(&est.estimate) <= 1e-8,
                "active constraints should hold at the observed estimate"
            );
            // all-positive signs give rows of a negated identity
            if fit.signs.iter().all(|&s| s == 1.0) {
                for i in 0..fit.active_set.len() {
                    assert_relative_eq!(constr.a[(i, est.n_unpenalized + i)], -1.0);
                }
            }
        }
    }

    #[test]
    fn orthonormal_gaussian_reduces_to_one_sided_threshold() {
        // with X_M'X_M = I and s_j = +1, vlo = lambda and vhi = +inf
        let n = 64;
        let mut x = DMatrix::zeros(n, 2);
        // two orthonormal columns
        for i in 0..n {
            x[(i, 0)] = if i < 32 { 0.125 } else { -0.125 };
            x[(i, 1)] = if (i / 16) % 2 == 0 { 0.125 } else { -0.125 };
        }
        assert_relative_eq!(x.column(0).norm(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(x.column(0).dot(&x.column(1)), 0.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = &x.column(0) * 2.0 + &x.column(1) * 1.5
            + DVector::from_fn(n, |_, _| 0.4 * rng.sample::<f64, _>(rand_distr::StandardNormal));
        let data = Dataset::new(x, Response::Continuous(y), vec![]).unwrap();
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let lambda = 0.5;
        let pen = PenaltySpec::new(lambda, &data).unwrap();
        let fit = fit_lasso(&fam, &data, &pen, &SolverControls::tight()).unwrap();
        assert_eq!(fit.active_set, vec![0, 1]);
        assert!(fit.signs.iter().all(|&s| s == 1.0));
        let report = infer(&fam, &data, &fit, &InferOptions::default()).unwrap();
        for row in &report.rows {
            assert_relative_eq!(row.vlo, lambda, max_relative = 1e-8);
            assert_eq!(row.vhi, f64::INFINITY);
            // one-sided p-value from the lambda-truncated normal
            let tg = TruncatedGaussian::new(0.0, 1.0, lambda, f64::INFINITY).unwrap();
            let expect = tg_pvalue(&tg, row.beta_bar, Alternative::TwoSided).unwrap();
            assert_relative_eq!(row.pvalue.unwrap(), expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn column_permutation_invariance() {
        let data = logistic_data(45, 7, 8);
        let fam = FamilySpec::logistic();
        let (fit, _) = moderate_fit(&fam, &data, 0.3);
        if fit.active_set.is_empty() {
            return;
        }
        let report = infer(&fam, &data, &fit, &InferOptions::default()).unwrap();

        // permute columns and re-run
        let perm: Vec<usize> = (0..7).rev().collect();
        let mut xp = DMatrix::zeros(45, 7);
        for (newj, &oldj) in perm.iter().enumerate() {
            xp.set_column(newj, &data.x.column(oldj));
        }
        let datap = Dataset::new(xp, data.response.clone(), vec![]).unwrap();
        let (fitp, _) = moderate_fit(&fam, &datap, 0.3);
        let reportp = infer(&fam, &datap, &fitp, &InferOptions::default()).unwrap();
        assert_eq!(report.rows.len(), reportp.rows.len());
        for row in &report.rows {
            let newcol = perm.iter().position(|&oldj| oldj == row.col).unwrap();
            let twin = reportp.rows.iter().find(|r| r.col == newcol).unwrap();
            assert_relative_eq!(row.pvalue.unwrap(), twin.pvalue.unwrap(), max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(row.ci_lo, twin.ci_lo, max_relative = 1e-7, epsilon = 1e-9);
            assert_relative_eq!(row.ci_hi, twin.ci_hi, max_relative = 1e-7, epsilon = 1e-9);
        }
    }

    #[test]
    fn bootstrap_requires_enough_replicates() {
        let data = gaussian_data(30, 4, 9);
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let (fit, _) = moderate_fit(&fam, &data, 0.3);
        if fit.active_set.is_empty() {
            return;
        }
        assert!(pairs_bootstrap_cov(&fam, &data, &fit, 1, 0).is_err());
        assert!(pairs_bootstrap_cov(&fam, &data, &fit, 99, 0).is_err());
    }

    #[test]
    fn bootstrap_and_sandwich_agree_with_plugin_homoskedastic() {
        // large-n homoskedastic gaussian: both robust covariances approach
        // sigma2 (X'X)^{-1}
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let beta = DVector::from_vec(vec![1.0, 0.5, 0.0]);
        let y = &x * &beta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let data = Dataset::new(x, Response::Continuous(y), vec![]).unwrap();
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let pen = PenaltySpec::new(5.0, &data).unwrap();
        let fit = fit_lasso(&fam, &data, &pen, &SolverControls::default()).unwrap();
        assert!(!fit.active_set.is_empty());
        let est = one_step(&fam, &data, &fit).unwrap();
        let plugin = &est.covariance;

        let boot = pairs_bootstrap_cov(&fam, &data, &fit, 1000, 123).unwrap();
        let rel = (&boot - plugin).norm() / plugin.norm();
        assert!(rel < 0.15, "bootstrap vs plugin relative Frobenius {rel}");

        let sand = sandwich_cov(&fam, &data, &fit).unwrap();
        let rel = (&sand - plugin).norm() / plugin.norm();
        assert!(rel < 0.15, "sandwich vs plugin relative Frobenius {rel}");

        let rel = (&sand - &boot).norm() / boot.norm();
        assert!(rel < 0.20, "sandwich vs bootstrap relative Frobenius {rel}");
    }

    #[test]
    fn sandwich_near_zero_for_exact_fit() {
        // n barely above the selected size: residuals, hence scores, are
        // tiny and the sandwich collapses toward zero
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = &x.column(0) * 2.0 + &x.column(1) * (-1.0);
        let data = Dataset::new(x, Response::Continuous(y.into_owned()), vec![]).unwrap();
        let fam = FamilySpec::gaussian_with_sigma2(1.0);
        let pen = PenaltySpec::new(1e-8, &data).unwrap();
        let fit = fit_lasso(&fam, &data, &pen, &SolverControls::default()).unwrap();
        let sand = sandwich_cov(&fam, &data, &fit).unwrap();
        assert!(sand.amax() < 1e-10, "sandwich should collapse on an exact fit");
    }

    #[test]
    fn selection_widens_one_sided_pvalues() {
        // orthonormal-design reduction: the truncated survival function at a
        // one-sided lambda cut dominates the untruncated one on a grid
        let lambda = 0.8;
        let tg = TruncatedGaussian::new(0.0, 1.0, lambda, f64::INFINITY).unwrap();
        for k in 0..40 {
            let x = lambda + 0.1 * k as f64;
            let selective = tg_pvalue(&tg, x, Alternative::Greater).unwrap();
            let naive = crate::normal::norm_sf(x);
            assert!(
                selective >= naive - 1e-12,
                "selective one-sided p {selective} below naive {naive} at x = {x}"
            );
        }
    }

    #[test]
    fn unpenalized_rows_get_naive_wald() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 50;
        let mut x = DMatrix::zeros(n, 5);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 1..5 {
                x[(i, j)] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        let y = DVector::from_fn(n, |i, _| if x[(i, 1)] + 0.5 * rng.sample::<f64, _>(rand_distr::StandardNormal) > 0.0 { 1.0 } else { 0.0 });
        let data = Dataset::new(x, Response::Binary(y), vec![0]).unwrap();
        let fam = FamilySpec::logistic();
        let (fit, _) = moderate_fit(&fam, &data, 0.3);
        if fit.active_set.is_empty() {
            return;
        }
        let report = infer(&fam, &data, &fit, &InferOptions::default()).unwrap();
        let intercept = report.rows.iter().find(|r| r.col == 0).unwrap();
        assert!(!intercept.penalized);
        assert_eq!(intercept.vlo, f64::NEG_INFINITY);
        assert_eq!(intercept.vhi, f64::INFINITY);
        assert_relative_eq!(intercept.pvalue.unwrap(), intercept.naive_pvalue);
        for row in report.rows.iter().filter(|r| r.penalized) {
            assert!(row.vlo <= row.beta_bar && row.beta_bar <= row.vhi);
        }
    }
}
