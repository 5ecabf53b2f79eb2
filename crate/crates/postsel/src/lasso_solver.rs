//! Penalized IRLS solver for `-loglik + lambda * sum |beta_j|` with an
//! unpenalized block, plus KKT verification, the smallest all-zero penalty
//! level, and K-fold cross-validation over a penalty grid.
//!
//! The inner step is cyclic coordinate descent on the weighted lasso
//! `1/2 (z - X b)' W (z - X b) + lambda * sum |b_j|` with warm starts; the
//! outer loop re-forms `(W, z)` and applies step-halving so the penalized
//! objective never increases. The penalty is in the unscaled (total
//! log-likelihood) convention.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model_family::{
    eta_for, local_quadratic, working_information, working_score, Dataset, FamilyKind, FamilySpec, Response,
    Weights,
};

/// Penalty level and which columns it applies to.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    /// Nonnegative multiplier of `sum |beta_j|` against the total
    /// (unscaled) log-likelihood.
    pub lambda: f64,
    /// Penalized column indices; disjoint from `Dataset::unpenalized_cols`.
    pub penalized_cols: Vec<usize>,
}

impl PenaltySpec {
    /// Penalize every column the dataset does not list as unpenalized.
    pub fn new(lambda: f64, data: &Dataset) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(PenaltySpec { lambda, penalized_cols: data.penalized_cols() })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltySpec { lambda, penalized_cols: self.penalized_cols.clone() }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        for &j in &self.penalized_cols {
            if j >= data.p() {
                return Err(Error::InvalidInput(format!("penalized column {j} out of range")));
            }
            if data.unpenalized_cols.contains(&j) {
                return Err(Error::InvalidInput(format!("column {j} is both penalized and unpenalized")));
            }
        }
        Ok(())
    }
}

/// Solver tolerances. The defaults make selection events unambiguous at the
/// reported KKT tolerance.
#[derive(Debug, Clone, Copy)]
pub struct SolverControls {
    /// Inner coordinate-descent tolerance on coefficient changes.
    pub inner_tol: f64,
    /// Outer IRLS tolerance on `max |delta coef|`.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Cap on coordinate-descent sweeps per inner solve.
    pub max_inner: usize,
    /// KKT tolerance certified at convergence.
    pub kkt_tol: f64,
    /// A penalized coefficient is active iff it exceeds this in magnitude.
    pub active_threshold: f64,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            inner_tol: 1e-10,
            outer_tol: 1e-8,
            max_outer: 100,
            max_inner: 50_000,
            kkt_tol: 1e-6,
            active_threshold: 1e-9,
        }
    }
}

impl SolverControls {
    /// Tightened tolerances for algebraic-identity checks.
    pub fn tight() -> Self {
        SolverControls { inner_tol: 1e-14, outer_tol: 1e-12, kkt_tol: 1e-9, ..Default::default() }
    }

    /// Loosened tolerances for cross-validation inner fits, which only feed
    /// held-out deviances; the selection-event fit at the chosen penalty
    /// still runs at full tolerance. Grid points that cannot converge within
    /// the iteration cap (extreme-overfit penalties) drop out of their fold.
    fn for_cv() -> Self {
        SolverControls { inner_tol: 1e-8, outer_tol: 1e-6, kkt_tol: 1e-4, max_outer: 30, ..Default::default() }
    }
}

/// A converged penalized fit together with its selection event.
#[derive(Debug, Clone)]
pub struct LassoFit {
    /// Full coefficient vector (length p, unpenalized columns included).
    pub beta_hat: DVector<f64>,
    /// Coefficients at the unpenalized columns, in `unpenalized_cols` order.
    pub alpha_hat: DVector<f64>,
    /// Active penalized columns, ascending.
    pub active_set: Vec<usize>,
    /// Signs of the active coefficients.
    pub signs: Vec<f64>,
    /// Subgradient `[X' dl/deta]_j / lambda` for inactive penalized columns,
    /// in ascending column order.
    pub inactive_subgrad: DVector<f64>,
    pub lambda: f64,
    /// Outer IRLS iterations taken.
    pub iterations: usize,
    pub max_kkt_violation: f64,
    /// Penalized objective after each accepted outer iteration.
    pub objective_path: Vec<f64>,
}

impl LassoFit {
    /// Inactive penalized columns, ascending.
    pub fn inactive_set(&self, penalty: &PenaltySpec) -> Vec<usize> {
        let mut cols: Vec<usize> =
            penalty.penalized_cols.iter().cloned().filter(|j| !self.active_set.contains(j)).collect();
        cols.sort_unstable();
        cols
    }
}

/// KKT diagnostics for a fit: residuals of the active block, the largest
/// inactive gradient magnitude, and residuals of the unpenalized block.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// `|[X' dl/deta]_j - lambda s_j|` per active column.
    pub active_residuals: Vec<f64>,
    /// `max_j |[X' dl/deta]_j|` over inactive penalized columns.
    pub inactive_max_abs: f64,
    /// `|[X' dl/deta]_j|` per unpenalized column.
    pub unpenalized_residuals: Vec<f64>,
    pub lambda: f64,
}

impl KktReport {
    /// Largest violation: active and unpenalized residuals directly, and the
    /// excess of the inactive gradient over `lambda`.
    pub fn max_violation(&self) -> f64 {
        let act = self.active_residuals.iter().cloned().fold(0.0f64, f64::max);
        let unp = self.unpenalized_residuals.iter().cloned().fold(0.0f64, f64::max);
        let inact = (self.inactive_max_abs - self.lambda).max(0.0);
        act.max(unp).max(inact)
    }

    pub fn pass(&self, kkt_tol: f64) -> bool {
        self.max_violation() <= kkt_tol
    }
}

fn working_loglik(family: &FamilySpec, data: &Dataset, eta: &DVector<f64>) -> Result<f64> {
    Ok(crate::model_family::log_likelihood(family, data, eta)? * family.dispersion_or_one())
}

fn penalty_value(penalty: &PenaltySpec, coef: &DVector<f64>) -> f64 {
    penalty.penalized_cols.iter().map(|&j| coef[j].abs()).sum::<f64>() * penalty.lambda
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// One inner solve of the weighted lasso at fixed `(W, z)`, warm-started at
/// `coef`. Updates `coef` in place; unpenalized columns get plain
/// least-squares updates.
fn weighted_lasso_cd(
    x: &DMatrix<f64>,
    weights: &Weights,
    z: &DVector<f64>,
    penalty: &PenaltySpec,
    unpenalized: &[usize],
    coef: &mut DVector<f64>,
    controls: &SolverControls,
) -> Result<()> {
    let p = x.ncols();
    let is_penalized: Vec<bool> = {
        let mut v = vec![false; p];
        for &j in &penalty.penalized_cols {
            v[j] = true;
        }
        v
    };
    let active_cols: Vec<usize> = {
        let mut v: Vec<usize> = penalty.penalized_cols.clone();
        v.extend_from_slice(unpenalized);
        v.sort_unstable();
        v
    };
    // V = W X restricted to the columns in play; d_j = x_j' W x_j
    let v_mat = match weights {
        Weights::Diagonal(_) => None,
        Weights::Full(w) => Some(w * x),
    };
    let wdiag = match weights {
        Weights::Diagonal(w) => Some(w),
        Weights::Full(_) => None,
    };
    let mut d = vec![0.0; p];
    for &j in &active_cols {
        let xj = x.column(j);
        d[j] = match (&v_mat, wdiag) {
            (Some(v), _) => v.column(j).dot(&xj),
            (None, Some(w)) => xj.iter().zip(w.iter()).map(|(xi, wi)| xi * xi * wi).sum(),
            _ => unreachable!(),
        };
    }
    let d_max = d.iter().cloned().fold(0.0f64, f64::max);
    if d_max <= 0.0 {
        return Err(Error::Singular("all weighted column norms vanish".into()));
    }

    // one coordinate-descent pass over `cols`; returns the largest move
    let pass = |cols: &[usize], coef: &mut DVector<f64>, r: &mut DVector<f64>| -> Result<f64> {
        let mut max_delta = 0.0f64;
        for &j in cols {
            let xj = x.column(j);
            let grad_j = match (&v_mat, wdiag) {
                (Some(v), _) => v.column(j).dot(r),
                (None, Some(w)) => xj.iter().zip(w.iter()).zip(r.iter()).map(|((xi, wi), ri)| xi * wi * ri).sum(),
                _ => unreachable!(),
            };
            let rho = grad_j + d[j] * coef[j];
            let lam = if is_penalized[j] { penalty.lambda } else { 0.0 };
            let target = soft_threshold(rho, lam);
            if d[j] <= 1e-14 * d_max {
                if target.abs() > 0.0 && !is_penalized[j] {
                    return Err(Error::Singular(format!("column {j} has no curvature under the current weights")));
                }
                continue;
            }
            let new = target / d[j];
            let delta = new - coef[j];
            if delta != 0.0 {
                coef[j] = new;
                r.axpy(-delta, &xj.into_owned(), 1.0);
                max_delta = max_delta.max(delta.abs());
            }
        }
        Ok(max_delta)
    };

    let mut r = z - x * &*coef;
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        let full_delta = pass(&active_cols, coef, &mut r)?;
        if full_delta < controls.inner_tol {
            // refresh the residual to clear accumulated drift, then confirm
            r = z - x * &*coef;
            let confirm = pass(&active_cols, coef, &mut r)?;
            if confirm < controls.inner_tol {
                return Ok(());
            }
        } else {
            // iterate on the current support until it stabilizes, then
            // return to a full pass to admit new coordinates
            let support: Vec<usize> =
                active_cols.iter().cloned().filter(|&j| coef[j] != 0.0 || !is_penalized[j]).collect();
            while sweeps < controls.max_inner {
                sweeps += 1;
                if pass(&support, coef, &mut r)? < controls.inner_tol {
                    break;
                }
            }
        }
        if sweeps >= controls.max_inner {
            return Err(Error::NonConvergence { iterations: sweeps, violation: full_delta });
        }
    }
}

/// Direct weighted least-squares solve over the columns in play (lambda = 0).
fn weighted_ls_direct(
    x: &DMatrix<f64>,
    weights: &Weights,
    z: &DVector<f64>,
    cols: &[usize],
    coef: &mut DVector<f64>,
) -> Result<()> {
    let xm = crate::model_family::submatrix(x, cols);
    let wx = weights.mul_mat(&xm);
    let gram = xm.transpose() * &wx;
    let rhs = wx.transpose() * z;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("weighted Gram matrix not positive definite (lambda = 0 needs full rank)".into()))?;
    let sol = chol.solve(&rhs);
    coef.fill(0.0);
    for (k, &j) in cols.iter().enumerate() {
        coef[j] = sol[k];
    }
    Ok(())
}

/// Gradient of the working log-likelihood in coefficient space, i.e.
/// `X' dl/deta`, over all columns.
fn coef_gradient(family: &FamilySpec, data: &Dataset, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let g = working_score(family, data, eta)?;
    Ok(data.x.transpose() * g)
}

fn kkt_from_gradient(grad: &DVector<f64>, penalty: &PenaltySpec, data: &Dataset, fit_beta: &DVector<f64>, active_threshold: f64) -> KktReport {
    let mut active_residuals = Vec::new();
    let mut inactive_max_abs = 0.0f64;
    for &j in &penalty.penalized_cols {
        if fit_beta[j].abs() > active_threshold {
            active_residuals.push((grad[j] - penalty.lambda * fit_beta[j].signum()).abs());
        } else {
            inactive_max_abs = inactive_max_abs.max(grad[j].abs());
        }
    }
    let unpenalized_residuals = data.unpenalized_cols.iter().map(|&j| grad[j].abs()).collect();
    KktReport { active_residuals, inactive_max_abs, unpenalized_residuals, lambda: penalty.lambda }
}

/// Fit the l1-penalized likelihood problem by penalized IRLS.
pub fn fit_lasso(
    family: &FamilySpec,
    data: &Dataset,
    penalty: &PenaltySpec,
    controls: &SolverControls,
) -> Result<LassoFit> {
    fit_lasso_from(family, data, penalty, controls, None)
}

/// As [`fit_lasso`], warm-started from a full-length coefficient vector.
pub fn fit_lasso_from(
    family: &FamilySpec,
    data: &Dataset,
    penalty: &PenaltySpec,
    controls: &SolverControls,
    warm: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    penalty.validate(data)?;
    let p = data.p();
    let mut coef = match warm {
        Some(w) if w.len() == p => w.clone(),
        _ => DVector::zeros(p),
    };
    let mut eta = &data.x * &coef;
    let mut obj = -working_loglik(family, data, &eta)? + penalty_value(penalty, &coef);
    let mut objective_path = vec![obj];
    let gaussian = family.kind == FamilyKind::Gaussian;
    let solve_cols: Vec<usize> = {
        let mut v = penalty.penalized_cols.clone();
        v.extend_from_slice(&data.unpenalized_cols);
        v.sort_unstable();
        v
    };

    let mut converged = false;
    let mut iterations = 0usize;
    let mut last_violation = f64::INFINITY;
    for it in 1..=controls.max_outer {
        iterations = it;
        let lq = local_quadratic(family, data, &eta)?;
        let mut proposal = coef.clone();
        if penalty.lambda == 0.0 {
            weighted_ls_direct(&data.x, &lq.weights, &lq.z, &solve_cols, &mut proposal)?;
        } else {
            weighted_lasso_cd(&data.x, &lq.weights, &lq.z, penalty, &data.unpenalized_cols, &mut proposal, controls)?;
        }

        // step-halving keeps the penalized objective monotone
        let delta = &proposal - &coef;
        let mut step = 1.0;
        let mut accepted = false;
        let mut new_coef = coef.clone();
        let mut new_obj = obj;
        for _ in 0..=30 {
            let cand = &coef + step * &delta;
            let cand_eta = &data.x * &cand;
            let cand_obj = -working_loglik(family, data, &cand_eta)? + penalty_value(penalty, &cand);
            if cand_obj <= obj + 1e-12 * (1.0 + obj.abs()) {
                new_coef = cand;
                new_obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no usable step; fall through to the KKT check at the current point
            new_coef = coef.clone();
            new_obj = obj;
        }
        let max_change = (&new_coef - &coef).amax();
        coef = new_coef;
        eta = &data.x * &coef;
        obj = new_obj.min(obj);
        objective_path.push(obj);

        let small_change = max_change < controls.outer_tol || (!accepted);
        if small_change || gaussian {
            let grad = coef_gradient(family, data, &eta)?;
            let report = kkt_from_gradient(&grad, penalty, data, &coef, controls.active_threshold);
            last_violation = report.max_violation();
            if report.pass(controls.kkt_tol) && small_change {
                converged = true;
                break;
            }
            if gaussian && report.pass(controls.kkt_tol) {
                converged = true;
                break;
            }
            if !accepted {
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, violation: last_violation });
    }

    // selection event
    let mut active_set = Vec::new();
    let mut signs = Vec::new();
    for &j in &{
        let mut v = penalty.penalized_cols.clone();
        v.sort_unstable();
        v
    } {
        if coef[j].abs() > controls.active_threshold {
            active_set.push(j);
            signs.push(coef[j].signum());
        } else {
            coef[j] = 0.0;
        }
    }
    eta = &data.x * &coef;
    let grad = coef_gradient(family, data, &eta)?;
    let report = kkt_from_gradient(&grad, penalty, data, &coef, controls.active_threshold);
    let inactive: Vec<usize> = {
        let mut v: Vec<usize> =
            penalty.penalized_cols.iter().cloned().filter(|j| !active_set.contains(j)).collect();
        v.sort_unstable();
        v
    };
    let inactive_subgrad = DVector::from_iterator(
        inactive.len(),
        inactive.iter().map(|&j| if penalty.lambda > 0.0 { grad[j] / penalty.lambda } else { 0.0 }),
    );
    let alpha_hat = DVector::from_iterator(data.unpenalized_cols.len(), data.unpenalized_cols.iter().map(|&j| coef[j]));

    Ok(LassoFit {
        beta_hat: coef,
        alpha_hat,
        active_set,
        signs,
        inactive_subgrad,
        lambda: penalty.lambda,
        iterations,
        max_kkt_violation: report.max_violation(),
        objective_path,
    })
}

/// Recompute the KKT residuals of a fit against the data it came from.
pub fn kkt_check(family: &FamilySpec, data: &Dataset, penalty: &PenaltySpec, fit: &LassoFit) -> Result<KktReport> {
    penalty.validate(data)?;
    let eta = &data.x * &fit.beta_hat;
    let grad = coef_gradient(family, data, &eta)?;
    let mut active_residuals = Vec::new();
    for (k, &j) in fit.active_set.iter().enumerate() {
        active_residuals.push((grad[j] - penalty.lambda * fit.signs[k]).abs());
    }
    let mut inactive_max_abs = 0.0f64;
    for &j in &penalty.penalized_cols {
        if !fit.active_set.contains(&j) {
            inactive_max_abs = inactive_max_abs.max(grad[j].abs());
        }
    }
    let unpenalized_residuals = data.unpenalized_cols.iter().map(|&j| grad[j].abs()).collect();
    Ok(KktReport { active_residuals, inactive_max_abs, unpenalized_residuals, lambda: penalty.lambda })
}

/// Coefficients of the unpenalized-block MLE with all penalized columns at
/// zero (Newton with step halving). Empty block gives a zero predictor.
fn unpenalized_block_mle(family: &FamilySpec, data: &Dataset) -> Result<DVector<f64>> {
    let cols = &data.unpenalized_cols;
    let mut coef = DVector::zeros(cols.len());
    if cols.is_empty() {
        return Ok(coef);
    }
    let mut ll = {
        let eta = eta_for(data, cols, &coef);
        working_loglik(family, data, &eta)?
    };
    for _ in 0..100 {
        let eta = eta_for(data, cols, &coef);
        let info = working_information(family, data, cols, &coef)?;
        let g = working_score(family, data, &eta)?;
        let xm = crate::model_family::submatrix(&data.x, cols);
        let grad = xm.transpose() * g;
        let chol = info
            .cholesky()
            .ok_or_else(|| Error::Singular("unpenalized block has singular information".into()))?;
        let dir = chol.solve(&grad);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..=30 {
            let cand = &coef + step * &dir;
            let cand_eta = eta_for(data, cols, &cand);
            let cand_ll = working_loglik(family, data, &cand_eta)?;
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                let delta = (&cand - &coef).amax();
                coef = cand;
                ll = cand_ll;
                moved = delta >= 1e-10;
                break;
            }
            step *= 0.5;
        }
        if coef.amax() > 50.0 {
            return Err(Error::Numerical("unpenalized-block MLE does not exist (diverging coefficients)".into()));
        }
        if !moved {
            return Ok(coef);
        }
    }
    Err(Error::NonConvergence { iterations: 100, violation: f64::NAN })
}

/// Smallest penalty with an empty active set:
/// `max_j |[X' dl/deta]_j|` over penalized columns at the unpenalized-block
/// MLE with `beta = 0`.
pub fn lambda_max(family: &FamilySpec, data: &Dataset, penalty: &PenaltySpec) -> Result<f64> {
    penalty.validate(data)?;
    if penalty.penalized_cols.is_empty() {
        return Err(Error::InvalidInput("no penalized columns".into()));
    }
    let alpha = unpenalized_block_mle(family, data)?;
    let eta = eta_for(data, &data.unpenalized_cols, &alpha);
    let g = working_score(family, data, &eta)?;
    let mut best = 0.0f64;
    for &j in &penalty.penalized_cols {
        best = best.max(data.x.column(j).dot(&g).abs());
    }
    Ok(best)
}

/// Result of [`cross_validate_lambda`].
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda_cv: f64,
    /// One point per grid value, in the input grid order.
    pub curve: Vec<CvPoint>,
}

#[derive(Debug, Clone)]
pub struct CvPoint {
    pub lambda: f64,
    /// Mean held-out deviance over valid folds; NaN when no fold was valid.
    pub mean_deviance: f64,
    pub valid_folds: usize,
}

fn subset_dataset(data: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let mut x = DMatrix::zeros(rows.len(), data.p());
    for (i, &r) in rows.iter().enumerate() {
        x.row_mut(i).copy_from(&data.x.row(r));
    }
    let response = match &data.response {
        Response::Continuous(y) => Response::Continuous(DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]))),
        Response::Binary(y) => Response::Binary(DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]))),
        Response::Survival { time, status } => Response::Survival {
            time: DVector::from_iterator(rows.len(), rows.iter().map(|&r| time[r])),
            status: DVector::from_iterator(rows.len(), rows.iter().map(|&r| status[r])),
        },
    };
    Dataset::with_names(x, response, data.unpenalized_cols.clone(), data.names.clone())
}

/// Held-out deviance of a fitted coefficient vector. Gaussian and logistic
/// use the test-set deviance; Cox uses the cross-validated partial
/// likelihood difference `-2 [l_full(coef) - l_train(coef)]`.
fn heldout_deviance(
    family: &FamilySpec,
    full: &Dataset,
    train: &Dataset,
    test: &Dataset,
    coef: &DVector<f64>,
) -> Result<f64> {
    match family.kind {
        FamilyKind::Cox => {
            let eta_full = &full.x * coef;
            let eta_train = &train.x * coef;
            let lf = working_loglik(family, full, &eta_full)?;
            let lt = working_loglik(family, train, &eta_train)?;
            Ok(-2.0 * (lf - lt))
        }
        _ => {
            let eta_test = &test.x * coef;
            Ok(-2.0 * working_loglik(family, test, &eta_test)?)
        }
    }
}

/// K-fold cross-validation of the penalty level over a grid, minimizing mean
/// held-out deviance. Folds are assigned by a seeded shuffle; grid points are
/// fitted warm-started in descending-lambda order.
pub fn cross_validate_lambda(
    family: &FamilySpec,
    data: &Dataset,
    penalty_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if penalty_grid.is_empty() {
        return Err(Error::InvalidInput("empty penalty grid".into()));
    }
    if folds < 2 || folds > data.n() {
        return Err(Error::InvalidInput(format!("folds must be in [2, n], got {folds}")));
    }
    let template = PenaltySpec::new(0.0, data)?;
    // descending order for warm starts, remembering original grid positions
    let mut order: Vec<usize> = (0..penalty_grid.len()).collect();
    order.sort_by(|&a, &b| penalty_grid[b].partial_cmp(&penalty_grid[a]).unwrap());

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<usize> = (0..data.n()).collect();
    shuffled.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut v = vec![0usize; data.n()];
        for (pos, &row) in shuffled.iter().enumerate() {
            v[row] = pos % folds;
        }
        v
    };

    let controls = SolverControls::for_cv();
    let mut dev_sum = vec![0.0f64; penalty_grid.len()];
    let mut dev_count = vec![0usize; penalty_grid.len()];
    for fold in 0..folds {
        let train_rows: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i] != fold).collect();
        let test_rows: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i] == fold).collect();
        if test_rows.is_empty() || train_rows.len() < 2 {
            continue;
        }
        let train = subset_dataset(data, &train_rows)?;
        let test = subset_dataset(data, &test_rows)?;
        let mut warm: Option<DVector<f64>> = None;
        for &gi in &order {
            let pen = template.with_lambda(penalty_grid[gi]);
            let fitted = fit_lasso_from(family, &train, &pen, &controls, warm.as_ref());
            match fitted {
                Ok(fit) => {
                    if let Ok(dev) = heldout_deviance(family, data, &train, &test, &fit.beta_hat) {
                        if dev.is_finite() {
                            dev_sum[gi] += dev;
                            dev_count[gi] += 1;
                        }
                    }
                    warm = Some(fit.beta_hat);
                }
                Err(_) => {
                    // this fold cannot support this grid point (e.g. one-class
                    // training response); leave it invalid and keep going
                    warm = None;
                }
            }
        }
    }

    let mut curve = Vec::with_capacity(penalty_grid.len());
    for (gi, &lambda) in penalty_grid.iter().enumerate() {
        let mean = if dev_count[gi] > 0 { dev_sum[gi] / dev_count[gi] as f64 } else { f64::NAN };
        curve.push(CvPoint { lambda, mean_deviance: mean, valid_folds: dev_count[gi] });
    }
    let min_required = (folds + 1) / 2;
    let best = curve
        .iter()
        .enumerate()
        .filter(|(_, c)| c.valid_folds >= min_required && c.mean_deviance.is_finite())
        .min_by(|(_, a), (_, b)| a.mean_deviance.partial_cmp(&b.mean_deviance).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("no valid grid point in cross-validation".into()))?;
    Ok(CvResult { lambda_cv: penalty_grid[best], curve })
}

/// Standard lambda grid: `count` log-spaced values on
/// `[frac_min * lambda_max, lambda_max]`, descending.
pub fn default_lambda_grid(lambda_max: f64, count: usize, frac_min: f64) -> Vec<f64> {
    if count <= 1 {
        return vec![lambda_max];
    }
    let lo = (frac_min * lambda_max).ln();
    let hi = lambda_max.ln();
    (0..count)
        .map(|i| (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
