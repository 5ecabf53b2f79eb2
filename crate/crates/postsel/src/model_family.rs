//! Likelihood families (Gaussian, logistic, Cox partial likelihood) behind a
//! uniform interface: log-likelihood, score in the linear predictor, IRLS
//! weights `W` and adjusted response `z`, and observed information.
//!
//! Conventions. Additive constants independent of the coefficients are
//! dropped in every family, so objective values are comparable only within a
//! family. The Gaussian working quantities are on the unit-dispersion scale
//! (`W = I`, `z = y`; the penalized problem is the usual least-squares
//! lasso); the dispersion enters only through [`log_likelihood`], [`score`]
//! and [`observed_information`], which divide by `sigma^2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Probabilities are clamped to this distance away from {0, 1} before
/// forming logistic weights and adjusted responses.
pub const PROB_CLAMP: f64 = 1e-10;

/// Response part of a dataset.
#[derive(Debug, Clone)]
pub enum Response {
    /// Continuous outcome for the Gaussian family.
    Continuous(DVector<f64>),
    /// 0/1 outcome for the logistic family.
    Binary(DVector<f64>),
    /// Right-censored survival outcome: positive times and 0/1 event status.
    Survival { time: DVector<f64>, status: DVector<f64> },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(y) | Response::Binary(y) => y.len(),
            Response::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A design matrix, a typed response, and the set of unpenalized columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n x p feature matrix. Unpenalized columns (e.g. an intercept) live in
    /// `x` alongside the penalized ones.
    pub x: DMatrix<f64>,
    pub response: Response,
    /// Column indices exempt from the l1 penalty; disjoint from the
    /// penalized columns by construction.
    pub unpenalized_cols: Vec<usize>,
    /// Column names used in reports; defaults to `x1..xp`.
    pub names: Vec<String>,
}

impl Dataset {
    /// Validates the invariants and builds a dataset. Column names default
    /// to `x1..xp`.
    pub fn new(x: DMatrix<f64>, response: Response, unpenalized_cols: Vec<usize>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, response, unpenalized_cols, names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        response: Response,
        mut unpenalized_cols: Vec<usize>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if response.len() != n {
            return Err(Error::InvalidInput(format!(
                "response length {} does not match {} rows",
                response.len(),
                n
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::InvalidInput("one name per column required".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in feature matrix".into()));
        }
        match &response {
            Response::Continuous(y) => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("non-finite entry in response".into()));
                }
            }
            Response::Binary(y) => {
                if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
                    return Err(Error::InvalidInput("binary response must be 0/1".into()));
                }
            }
            Response::Survival { time, status } => {
                if time.iter().any(|t| !t.is_finite() || *t <= 0.0) {
                    return Err(Error::InvalidInput("survival times must be finite and > 0".into()));
                }
                if status.iter().any(|s| *s != 0.0 && *s != 1.0) {
                    return Err(Error::InvalidInput("survival status must be 0/1".into()));
                }
            }
        }
        unpenalized_cols.sort_unstable();
        unpenalized_cols.dedup();
        if unpenalized_cols.iter().any(|&j| j >= x.ncols()) {
            return Err(Error::InvalidInput("unpenalized column index out of range".into()));
        }
        Ok(Dataset { x, response, unpenalized_cols, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Columns subject to the l1 penalty, in increasing order.
    pub fn penalized_cols(&self) -> Vec<usize> {
        (0..self.p()).filter(|j| !self.unpenalized_cols.contains(j)).collect()
    }
}

/// Tie handling for the Cox partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieMethod {
    #[default]
    Breslow,
}

/// Which likelihood family, plus the family-specific knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    /// Gaussian error variance. Must be set (or estimated) before inference;
    /// fitting does not use it. Logistic and Cox ignore it.
    pub dispersion: Option<f64>,
    pub tie_method: TieMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Gaussian,
    Logistic,
    Cox,
}

impl FamilySpec {
    pub fn gaussian() -> Self {
        FamilySpec { kind: FamilyKind::Gaussian, dispersion: None, tie_method: TieMethod::Breslow }
    }

    pub fn gaussian_with_sigma2(sigma2: f64) -> Self {
        FamilySpec { kind: FamilyKind::Gaussian, dispersion: Some(sigma2), tie_method: TieMethod::Breslow }
    }

    pub fn logistic() -> Self {
        FamilySpec { kind: FamilyKind::Logistic, dispersion: Some(1.0), tie_method: TieMethod::Breslow }
    }

    pub fn cox() -> Self {
        FamilySpec { kind: FamilyKind::Cox, dispersion: None, tie_method: TieMethod::Breslow }
    }

    /// Dispersion used by the sigma^2-aware quantities; 1 when unset.
    pub fn dispersion_or_one(&self) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => self.dispersion.unwrap_or(1.0),
            _ => 1.0,
        }
    }

    fn check_response(&self, data: &Dataset) -> Result<()> {
        let ok = matches!(
            (self.kind, &data.response),
            (FamilyKind::Gaussian, Response::Continuous(_))
                | (FamilyKind::Logistic, Response::Binary(_))
                | (FamilyKind::Cox, Response::Survival { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("response type does not match family {:?}", self.kind)))
        }
    }
}

/// IRLS weight matrix: diagonal for Gaussian/logistic, the full negative
/// Hessian in the linear predictor for Cox.
#[derive(Debug, Clone)]
pub enum Weights {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl Weights {
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Weights::Diagonal(w) => w.component_mul(v),
            Weights::Full(w) => w * v,
        }
    }

    /// `W X` for a design matrix `X`.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Weights::Diagonal(w) => {
                let mut out = x.clone();
                for j in 0..out.ncols() {
                    let mut col = out.column_mut(j);
                    for i in 0..col.len() {
                        col[i] *= w[i];
                    }
                }
                out
            }
            Weights::Full(w) => w * x,
        }
    }

    pub fn to_full(&self) -> DMatrix<f64> {
        match self {
            Weights::Diagonal(w) => DMatrix::from_diagonal(w),
            Weights::Full(w) => w.clone(),
        }
    }
}

/// Local quadratic approximation at a linear predictor: weights `W`,
/// adjusted response `z`, the predictor itself, and the log-likelihood.
#[derive(Debug, Clone)]
pub struct LocalQuadratic {
    pub weights: Weights,
    pub z: DVector<f64>,
    pub eta: DVector<f64>,
    pub loglik: f64,
}

fn check_eta(eta: &DVector<f64>, n: usize) -> Result<()> {
    if eta.len() != n {
        return Err(Error::InvalidInput(format!("eta length {} != n = {}", eta.len(), n)));
    }
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite linear predictor".into()));
    }
    Ok(())
}

/// Log-likelihood at a linear predictor, up to family-specific constants.
pub fn log_likelihood(family: &FamilySpec, data: &Dataset, eta: &DVector<f64>) -> Result<f64> {
    family.check_response(data)?;
    check_eta(eta, data.n())?;
    match (&family.kind, &data.response) {
        (FamilyKind::Gaussian, Response::Continuous(y)) => {
            let sigma2 = family.dispersion_or_one();
            let r = y - eta;
            Ok(-0.5 * r.norm_squared() / sigma2)
        }
        (FamilyKind::Logistic, Response::Binary(y)) => {
            // y ln(pi) + (1-y) ln(1-pi) = -ln(1 + exp(-(2y-1) eta))
            let mut ll = 0.0;
            for i in 0..y.len() {
                let s = if y[i] > 0.5 { eta[i] } else { -eta[i] };
                ll -= ln_1p_exp(-s);
            }
            Ok(ll)
        }
        (FamilyKind::Cox, Response::Survival { .. }) => {
            let cox = CoxIndex::new(data)?;
            Ok(cox.log_partial_likelihood(eta))
        }
        _ => unreachable!(),
    }
}

/// `ln(1 + exp(x))` without overflow.
fn ln_1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Score in the linear predictor, `d loglik / d eta`.
pub fn score(family: &FamilySpec, data: &Dataset, eta: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(working_score(family, data, eta)? / family.dispersion_or_one())
}

/// Score of the unit-dispersion working likelihood: for Gaussian `y - eta`,
/// otherwise identical to [`score`]. The penalized problem and the selection
/// event are calibrated against this scale.
pub(crate) fn working_score(family: &FamilySpec, data: &Dataset, eta: &DVector<f64>) -> Result<DVector<f64>> {
    family.check_response(data)?;
    check_eta(eta, data.n())?;
    match (&family.kind, &data.response) {
        (FamilyKind::Gaussian, Response::Continuous(y)) => Ok(y - eta),
        (FamilyKind::Logistic, Response::Binary(y)) => {
            let mut g = DVector::zeros(y.len());
            for i in 0..y.len() {
                g[i] = y[i] - sigmoid(eta[i]);
            }
            Ok(g)
        }
        (FamilyKind::Cox, Response::Survival { .. }) => {
            let cox = CoxIndex::new(data)?;
            Ok(cox.score(eta))
        }
        _ => unreachable!(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Local quadratic (IRLS) pieces at `eta`. For Cox the weight matrix is the
/// full dense negative Hessian of the partial likelihood and `z` uses a
/// pseudo-inverse of `W` on its column space.
pub fn local_quadratic(family: &FamilySpec, data: &Dataset, eta: &DVector<f64>) -> Result<LocalQuadratic> {
    family.check_response(data)?;
    check_eta(eta, data.n())?;
    let loglik = log_likelihood(family, data, eta)?;
    match (&family.kind, &data.response) {
        (FamilyKind::Gaussian, Response::Continuous(y)) => Ok(LocalQuadratic {
            weights: Weights::Diagonal(DVector::from_element(data.n(), 1.0)),
            z: y.clone(),
            eta: eta.clone(),
            loglik,
        }),
        (FamilyKind::Logistic, Response::Binary(y)) => {
            let n = data.n();
            let mut w = DVector::zeros(n);
            let mut z = DVector::zeros(n);
            for i in 0..n {
                let pi = sigmoid(eta[i]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                w[i] = pi * (1.0 - pi);
                z[i] = eta[i] + (y[i] - pi) / w[i];
            }
            Ok(LocalQuadratic { weights: Weights::Diagonal(w), z, eta: eta.clone(), loglik })
        }
        (FamilyKind::Cox, Response::Survival { .. }) => {
            let cox = CoxIndex::new(data)?;
            let w = cox.neg_hessian(eta);
            let g = cox.score(eta);
            let z = eta + pseudo_solve_psd(&w, &g)?;
            Ok(LocalQuadratic { weights: Weights::Full(w), z, eta: eta.clone(), loglik })
        }
        _ => unreachable!(),
    }
}

/// Observed information of the submodel restricted to `cols`, evaluated at
/// `beta` (coefficients over those columns): `X_M' W X_M / sigma^2`.
pub fn observed_information(
    family: &FamilySpec,
    data: &Dataset,
    cols: &[usize],
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if cols.is_empty() {
        return Err(Error::InvalidInput("observed_information: empty column set".into()));
    }
    if beta.len() != cols.len() || beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("observed_information: beta must be finite with one entry per column".into()));
    }
    Ok(working_information(family, data, cols, beta)? / family.dispersion_or_one())
}

/// `X_M' W X_M` on the unit-dispersion scale; the information the one-step
/// shift and selection-event offsets are expressed in.
pub(crate) fn working_information(
    family: &FamilySpec,
    data: &Dataset,
    cols: &[usize],
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let eta = eta_for(data, cols, beta);
    let xm = submatrix(&data.x, cols);
    let lq = local_quadratic(family, data, &eta)?;
    let wx = lq.weights.mul_mat(&xm);
    Ok(xm.transpose() * wx)
}

/// Linear predictor from coefficients on a column subset (zeros elsewhere).
pub(crate) fn eta_for(data: &Dataset, cols: &[usize], beta: &DVector<f64>) -> DVector<f64> {
    let mut eta = DVector::zeros(data.n());
    for (k, &j) in cols.iter().enumerate() {
        eta.axpy(beta[k], &data.x.column(j).into_owned(), 1.0);
    }
    eta
}

pub(crate) fn submatrix(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.set_column(k, &x.column(j));
    }
    out
}

/// Per-observation score contributions in coefficient space over `cols`,
/// evaluated at `beta`: rows sum to the gradient of the (sigma^2-free)
/// log-likelihood. Gaussian/logistic rows are `x_i * (y_i - mu_i)`; Cox rows
/// are score residuals. Used by the sandwich covariance.
pub(crate) fn score_residuals(
    family: &FamilySpec,
    data: &Dataset,
    cols: &[usize],
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    family.check_response(data)?;
    let eta = eta_for(data, cols, beta);
    let n = data.n();
    let q = cols.len();
    match (&family.kind, &data.response) {
        (FamilyKind::Cox, Response::Survival { .. }) => {
            let cox = CoxIndex::new(data)?;
            let xm = submatrix(&data.x, cols);
            Ok(cox.score_residuals(&eta, &xm))
        }
        _ => {
            let g = working_score(family, data, &eta)?;
            let mut out = DMatrix::zeros(n, q);
            for (k, &j) in cols.iter().enumerate() {
                for i in 0..n {
                    out[(i, k)] = data.x[(i, j)] * g[i];
                }
            }
            Ok(out)
        }
    }
}

/// Solve `W v = g` through the eigendecomposition of the symmetric PSD `W`,
/// dropping directions with eigenvalues below `1e-12 * max_eig`.
fn pseudo_solve_psd(w: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = w.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max_eig <= 0.0 {
        return Err(Error::Singular("weight matrix has no positive eigenvalues".into()));
    }
    let tol = 1e-12 * max_eig;
    let proj = eig.eigenvectors.transpose() * g;
    let mut scaled = proj;
    for (i, s) in scaled.iter_mut().enumerate() {
        let lam = eig.eigenvalues[i];
        *s = if lam > tol { *s / lam } else { 0.0 };
    }
    Ok(&eig.eigenvectors * scaled)
}

/// Sorted-time index for Cox computations: observation order by ascending
/// time and groups of tied times with their event counts.
struct CoxIndex {
    /// observation indices sorted by ascending time
    order: Vec<usize>,
    /// (start, end) ranges into `order` for each distinct time, ascending
    groups: Vec<(usize, usize)>,
    status: DVector<f64>,
}

impl CoxIndex {
    fn new(data: &Dataset) -> Result<Self> {
        let (time, status) = match &data.response {
            Response::Survival { time, status } => (time, status),
            _ => return Err(Error::InvalidInput("cox family requires survival response".into())),
        };
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[a].partial_cmp(&time[b]).unwrap());
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || time[order[k]] > time[order[start]] {
                groups.push((start, k));
                start = k;
            }
        }
        Ok(CoxIndex { order, groups, status: status.clone() })
    }

    /// Risk-set sums `S_g = sum_{t_j >= t_g} exp(eta_j)` for each distinct
    /// time group, with exp shifted by max(eta) for stability, plus the
    /// shifted exponentials per observation and event counts per group.
    fn risk_sums(&self, eta: &DVector<f64>) -> (Vec<f64>, DVector<f64>, Vec<f64>) {
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex = eta.map(|v| (v - shift).exp());
        let g = self.groups.len();
        let mut sums = vec![0.0; g];
        let mut events = vec![0.0; g];
        let mut suffix = 0.0;
        for gi in (0..g).rev() {
            let (s, e) = self.groups[gi];
            for &idx in &self.order[s..e] {
                suffix += ex[idx];
                events[gi] += self.status[idx];
            }
            sums[gi] = suffix;
        }
        (sums, ex, events)
    }

    /// Breslow log partial likelihood, invariant to constant shifts in eta.
    fn log_partial_likelihood(&self, eta: &DVector<f64>) -> f64 {
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (sums, _, events) = self.risk_sums(eta);
        let mut ll = 0.0;
        for (gi, &(s, e)) in self.groups.iter().enumerate() {
            for &idx in &self.order[s..e] {
                if self.status[idx] > 0.5 {
                    ll += eta[idx] - shift;
                }
            }
            if events[gi] > 0.0 {
                ll -= events[gi] * sums[gi].ln();
            }
        }
        ll
    }

    /// `d log PL / d eta_k = status_k - exp(eta_k) * A_k` where `A_k`
    /// accumulates `d_g / S_g` over event groups with `t_g <= t_k`.
    fn score(&self, eta: &DVector<f64>) -> DVector<f64> {
        let (sums, ex, events) = self.risk_sums(eta);
        let mut g = DVector::zeros(eta.len());
        let mut a = 0.0;
        for (gi, &(s, e)) in self.groups.iter().enumerate() {
            a += events[gi] / sums[gi];
            for &idx in &self.order[s..e] {
                g[idx] = self.status[idx] - ex[idx] * a;
            }
        }
        g
    }

    /// Full negative Hessian of the partial likelihood in eta:
    /// `W_kl = delta_kl ex_k A_k - ex_k ex_l B_min(g_k, g_l)` with
    /// `B_g = sum_{h <= g} d_h / S_h^2` (in shifted-exponential units the
    /// shift cancels between the two factors).
    fn neg_hessian(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let (sums, ex, events) = self.risk_sums(eta);
        let n = eta.len();
        let mut a_per = vec![0.0; n];
        let mut b_per = vec![0.0; n];
        let mut a = 0.0;
        let mut b = 0.0;
        for (gi, &(s, e)) in self.groups.iter().enumerate() {
            a += events[gi] / sums[gi];
            b += events[gi] / (sums[gi] * sums[gi]);
            for &idx in &self.order[s..e] {
                a_per[idx] = a;
                b_per[idx] = b;
            }
        }
        let mut w = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                let bm = b_per[k].min(b_per[l]);
                let mut v = -ex[k] * ex[l] * bm;
                if k == l {
                    v += ex[k] * a_per[k];
                }
                w[(k, l)] = v;
            }
        }
        w
    }

    /// Lin-Wei score residuals over the columns of `xm`; rows sum to the
    /// partial-likelihood gradient in coefficient space.
    fn score_residuals(&self, eta: &DVector<f64>, xm: &DMatrix<f64>) -> DMatrix<f64> {
        let (sums, ex, events) = self.risk_sums(eta);
        let n = eta.len();
        let q = xm.ncols();
        // weighted risk-set means xbar_g, cumulative A_g and C_g
        let mut xbar = vec![DVector::<f64>::zeros(q); self.groups.len()];
        let mut suffix = DVector::<f64>::zeros(q);
        for gi in (0..self.groups.len()).rev() {
            let (s, e) = self.groups[gi];
            for &idx in &self.order[s..e] {
                suffix.axpy(ex[idx], &xm.row(idx).transpose(), 1.0);
            }
            xbar[gi] = &suffix / sums[gi];
        }
        let mut out = DMatrix::zeros(n, q);
        let mut a = 0.0;
        let mut c = DVector::<f64>::zeros(q);
        for (gi, &(s, e)) in self.groups.iter().enumerate() {
            a += events[gi] / sums[gi];
            c.axpy(events[gi] / sums[gi], &xbar[gi], 1.0);
            for &idx in &self.order[s..e] {
                let xi = xm.row(idx).transpose();
                let mut u = DVector::<f64>::zeros(q);
                if self.status[idx] > 0.5 {
                    u += &xi - &xbar[gi];
                }
                // - ex_i * (A x_i - C)
                u.axpy(-ex[idx] * a, &xi, 1.0);
                u.axpy(ex[idx], &c, 1.0);
                out.row_mut(idx).copy_from(&u.transpose());
            }
        }
        out
    }
}
