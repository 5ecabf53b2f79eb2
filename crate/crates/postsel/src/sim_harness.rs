//! Synthetic-data simulation designs and end-to-end replication drivers:
//! equicorrelated-feature GLM/Cox designs, the two-correlated-variables
//! precision design, p-value pooling with ECDFs and KS distances, and
//! coverage/length summaries.
//!
//! Replications run in parallel with per-replication seeded RNG streams and
//! are pooled in replication order, so a `(design, seed)` pair reproduces
//! bit-identical reports.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphical_lasso::{fit_glasso_data, glasso_infer, GlassoControls, GlassoInferOptions};
use crate::lasso_solver::{
    cross_validate_lambda, default_lambda_grid, fit_lasso, lambda_max, PenaltySpec, SolverControls,
};
use crate::model_family::{Dataset, FamilyKind, FamilySpec, Response};
use crate::selective_glm::{infer, CovarianceMethod, InferOptions};

/// How the penalty level is chosen per replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    /// Fraction of the replication's own `lambda_max`.
    FracLambdaMax(f64),
    Cv { folds: usize, grid_size: usize, grid_min_frac: f64 },
}

impl LambdaRule {
    pub fn cv_default() -> Self {
        LambdaRule::Cv { folds: 10, grid_size: 50, grid_min_frac: 0.05 }
    }
}

/// Which replications enter the pooled report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreeningFilter {
    None,
    /// Keep replications whose active set contains the true support.
    Screening,
    /// Keep replications selecting the given feature (0-based).
    CoordSelected(usize),
    /// Keep replications selecting the given edge (0-based, j < k).
    EdgeSelected(usize, usize),
}

/// Gaussian dispersion handling inside a design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma2Rule {
    /// Residual mean square of the selected model (requires n > p).
    PlugIn,
    Supplied(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Glm(FamilyKind),
    Glasso,
}

/// A full simulation design.
#[derive(Debug, Clone)]
pub struct SimDesign {
    pub kind: DesignKind,
    pub n: usize,
    /// Number of features (the intercept, when enabled, is extra).
    pub p: usize,
    /// GLM designs: equicorrelation of the Gaussian features. Precision
    /// design: correlation of the first two variables, the rest independent.
    pub feature_correlation: f64,
    /// True coefficients on the feature scale (GLM designs; length p).
    pub beta_true: Vec<f64>,
    pub lambda_rule: LambdaRule,
    /// Target censoring fraction (Cox designs).
    pub censoring: Option<f64>,
    /// Heteroskedastic Gaussian errors with mixing weight `b` in (0, 1):
    /// the error variance is the product over disjoint pairs of non-signal
    /// columns of `(1 - b) + b w^2`, where `w` is the standardized
    /// difference of the pair. Pair differences cancel the equicorrelation
    /// factor, so the variance lives in an even idiosyncratic channel the
    /// selected block cannot absorb, and every non-signal coordinate is
    /// miscalibrated by the same factor `1 + b` under the plug-in analysis.
    pub heteroskedastic: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    pub screening_filter: ScreeningFilter,
    pub level: f64,
    pub covariance_method: CovarianceMethod,
    /// Add an unpenalized intercept column (ignored for Cox).
    pub intercept: bool,
    pub sigma2_rule: Sigma2Rule,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.feature_correlation) {
            return Err(Error::InvalidInput("feature correlation must be in [0, 1)".into()));
        }
        if self.replications < 1 {
            return Err(Error::InvalidInput("need at least one replication".into()));
        }
        if let DesignKind::Glm(_) = self.kind {
            if self.beta_true.len() != self.p {
                return Err(Error::InvalidInput(format!(
                    "beta_true has length {} but p = {}",
                    self.beta_true.len(),
                    self.p
                )));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput("level must be in (0,1)".into()));
        }
        if let Some(f) = self.censoring {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidInput("censoring fraction must be in [0, 1)".into()));
            }
        }
        Ok(())
    }

    fn family(&self) -> Result<FamilySpec> {
        match self.kind {
            DesignKind::Glm(FamilyKind::Gaussian) => Ok(match self.sigma2_rule {
                Sigma2Rule::Supplied(s2) => FamilySpec::gaussian_with_sigma2(s2),
                Sigma2Rule::PlugIn => FamilySpec::gaussian(),
            }),
            DesignKind::Glm(FamilyKind::Logistic) => Ok(FamilySpec::logistic()),
            DesignKind::Glm(FamilyKind::Cox) => Ok(FamilySpec::cox()),
            DesignKind::Glasso => Err(Error::InvalidInput("precision designs have no GLM family".into())),
        }
    }

    fn rep_rng(&self, replication: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication as u64 + 1);
        rng
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Draw one replication's dataset for a GLM design. Deterministic in
/// `(design.seed, replication)`.
pub fn generate(design: &SimDesign, replication: usize) -> Result<Dataset> {
    design.validate()?;
    let family = match design.kind {
        DesignKind::Glm(f) => f,
        DesignKind::Glasso => {
            return Err(Error::InvalidInput("generate() is for GLM designs; precision designs draw raw X".into()))
        }
    };
    let mut rng = design.rep_rng(replication);
    let (n, p, rho) = (design.n, design.p, design.feature_correlation);

    let mut features = DMatrix::zeros(n, p);
    for i in 0..n {
        let shared = standard_normal(&mut rng);
        for j in 0..p {
            features[(i, j)] = rho.sqrt() * shared + (1.0 - rho).sqrt() * standard_normal(&mut rng);
        }
    }
    let beta = DVector::from_vec(design.beta_true.clone());
    let eta = &features * &beta;

    let intercept = design.intercept && family != FamilyKind::Cox;
    let (x, unpenalized, names) = if intercept {
        let mut x = DMatrix::zeros(n, p + 1);
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        x.view_mut((0, 1), (n, p)).copy_from(&features);
        let mut names = vec!["intercept".to_string()];
        names.extend((1..=p).map(|j| format!("x{j}")));
        (x, vec![0usize], names)
    } else {
        (features.clone(), vec![], (1..=p).map(|j| format!("x{j}")).collect())
    };

    let response = match family {
        FamilyKind::Gaussian => {
            let nonsignal: Vec<usize> = (0..p).filter(|&j| design.beta_true[j] == 0.0).collect();
            let pair_scale = (2.0 * (1.0 - rho)).sqrt();
            let mut y = DVector::zeros(n);
            for i in 0..n {
                let sd = match design.heteroskedastic {
                    Some(b) if nonsignal.len() >= 2 => {
                        let mut var = 1.0;
                        for pair in nonsignal.chunks_exact(2) {
                            let w = (features[(i, pair[0])] - features[(i, pair[1])]) / pair_scale;
                            var *= (1.0 - b) + b * w * w;
                        }
                        var.sqrt()
                    }
                    _ => 1.0,
                };
                y[i] = eta[i] + sd * standard_normal(&mut rng);
            }
            Response::Continuous(y)
        }
        FamilyKind::Logistic => {
            let mut y = DVector::zeros(n);
            for i in 0..n {
                let pi = 1.0 / (1.0 + (-eta[i]).exp());
                y[i] = if rng.gen::<f64>() < pi { 1.0 } else { 0.0 };
            }
            Response::Binary(y)
        }
        FamilyKind::Cox => {
            // Exponential(1) baseline with hazard exp(eta); censoring times
            // Exponential(c) with c = f / (1 - f) hits fraction f under the null.
            let frac = design.censoring.unwrap_or(0.0);
            let mut time = DVector::zeros(n);
            let mut status = DVector::zeros(n);
            for i in 0..n {
                let u: f64 = rng.gen::<f64>().max(1e-300);
                let event_time = -u.ln() * (-eta[i]).exp();
                let (t, d) = if frac > 0.0 {
                    let c = frac / (1.0 - frac);
                    let v: f64 = rng.gen::<f64>().max(1e-300);
                    let censor_time = -v.ln() / c;
                    if event_time <= censor_time {
                        (event_time, 1.0)
                    } else {
                        (censor_time, 0.0)
                    }
                } else {
                    (event_time, 1.0)
                };
                time[i] = t.max(1e-300);
                status[i] = d;
            }
            Response::Survival { time, status }
        }
    };
    Dataset::with_names(x, response, unpenalized, names)
}

/// Draw one replication's raw data matrix for the precision design: standard
/// Gaussian columns, independent except `corr(X1, X2) = feature_correlation`.
pub fn generate_glasso(design: &SimDesign, replication: usize) -> Result<DMatrix<f64>> {
    design.validate()?;
    let mut rng = design.rep_rng(replication);
    let (n, p, rho) = (design.n, design.p, design.feature_correlation);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let z0 = standard_normal(&mut rng);
        let z1 = standard_normal(&mut rng);
        x[(i, 0)] = z0;
        if p > 1 {
            x[(i, 1)] = rho * z0 + (1.0 - rho * rho).sqrt() * z1;
        }
        for j in 2..p {
            x[(i, j)] = standard_normal(&mut rng);
        }
    }
    Ok(x)
}

/// One pooled inference outcome.
#[derive(Debug, Clone)]
struct RepOutcome {
    /// (is_null, selective p, naive p, covered, finite_length, length)
    rows: Vec<(bool, Option<f64>, f64, bool, bool, f64)>,
    selected_nonempty: bool,
    screened: bool,
    signal_selected: bool,
}

/// Replication bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationCounts {
    pub attempted: usize,
    pub selected_nonempty: usize,
    pub screened: usize,
    pub failed: usize,
}

/// Pooled simulation report.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub null_pvalues: Vec<f64>,
    pub nonnull_pvalues: Vec<f64>,
    pub naive_null_pvalues: Vec<f64>,
    pub naive_nonnull_pvalues: Vec<f64>,
    /// `(t, Fhat(t))` of the null selective p-values on a 0.01 grid.
    pub ecdf_grid: Vec<(f64, f64)>,
    /// KS distance of the null selective p-values from U(0, 1).
    pub ks_statistic: f64,
    pub naive_ks_statistic: f64,
    /// Fraction of pooled intervals containing the true parameter.
    pub coverage: f64,
    pub miscoverage: f64,
    pub median_finite_length: f64,
    pub infinite_length_fraction: f64,
    pub counts: ReplicationCounts,
    /// Fraction of usable replications selecting the signal coordinate
    /// (designs with a non-null coordinate; NaN otherwise).
    pub signal_selection_frequency: f64,
}

/// Empirical KS distance from U(0, 1).
pub fn ks_uniform(pvalues: &[f64]) -> f64 {
    if pvalues.is_empty() {
        return f64::NAN;
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len() as f64;
    let mut ks = 0.0f64;
    for (i, u) in sorted.iter().enumerate() {
        let hi = (i as f64 + 1.0) / m - u;
        let lo = u - i as f64 / m;
        ks = ks.max(hi).max(lo);
    }
    ks
}

fn ecdf_grid(pvalues: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len();
    (0..=100)
        .map(|k| {
            let t = k as f64 / 100.0;
            let count = sorted.partition_point(|&u| u <= t);
            (t, if m == 0 { 0.0 } else { count as f64 / m as f64 })
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn glm_replication(design: &SimDesign, replication: usize) -> Result<RepOutcome> {
    let data = generate(design, replication)?;
    let family = design.family()?;
    let pen_template = PenaltySpec::new(0.0, &data)?;
    let lambda = match design.lambda_rule {
        LambdaRule::Fixed(v) => v,
        LambdaRule::FracLambdaMax(f) => f * lambda_max(&family, &data, &pen_template)?,
        LambdaRule::Cv { folds, grid_size, grid_min_frac } => {
            let lmax = lambda_max(&family, &data, &pen_template)?;
            let grid = default_lambda_grid(lmax, grid_size, grid_min_frac);
            cross_validate_lambda(&family, &data, &grid, folds, design.seed.wrapping_add(replication as u64))?
                .lambda_cv
        }
    };
    let penalty = pen_template.with_lambda(lambda);
    let fit = fit_lasso(&family, &data, &penalty, &SolverControls::default())?;

    let offset = if design.intercept && design.kind != DesignKind::Glm(FamilyKind::Cox) { 1 } else { 0 };
    let feature_of = |col: usize| col.checked_sub(offset);
    let support: Vec<usize> = (0..design.p).filter(|&j| design.beta_true[j] != 0.0).collect();
    let active_features: Vec<usize> = fit.active_set.iter().filter_map(|&c| feature_of(c)).collect();
    let selected_nonempty = !fit.active_set.is_empty();
    let screened = match design.screening_filter {
        ScreeningFilter::None => true,
        ScreeningFilter::Screening => support.iter().all(|j| active_features.contains(j)),
        ScreeningFilter::CoordSelected(j) => active_features.contains(&j),
        ScreeningFilter::EdgeSelected(..) => {
            return Err(Error::InvalidInput("edge filter applies to precision designs".into()))
        }
    };
    let signal_selected = support.iter().all(|j| active_features.contains(j)) && !support.is_empty();
    if !selected_nonempty || !screened {
        return Ok(RepOutcome { rows: Vec::new(), selected_nonempty, screened, signal_selected });
    }

    // bootstrap draws get their own stream per replication
    let covariance_method = match design.covariance_method {
        CovarianceMethod::PairsBootstrap { replicates, .. } => CovarianceMethod::PairsBootstrap {
            replicates,
            seed: design.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(replication as u64),
        },
        other => other,
    };
    let options = InferOptions {
        level: design.level,
        covariance_method,
        null_values: None,
        alternative: crate::polyhedral::Alternative::TwoSided,
    };
    let report = infer(&family, &data, &fit, &options)?;
    let mut rows = Vec::new();
    for row in report.rows.iter().filter(|r| r.penalized) {
        let feature = match feature_of(row.col) {
            Some(f) => f,
            None => continue,
        };
        let truth = design.beta_true[feature];
        let covered = row.ci_lo <= truth && truth <= row.ci_hi;
        let finite = row.ci_lo.is_finite() && row.ci_hi.is_finite();
        let length = row.ci_hi - row.ci_lo;
        rows.push((truth == 0.0, row.pvalue, row.naive_pvalue, covered, finite, length));
    }
    Ok(RepOutcome { rows, selected_nonempty, screened, signal_selected })
}

fn glasso_replication(design: &SimDesign, replication: usize) -> Result<RepOutcome> {
    let x = generate_glasso(design, replication)?;
    let lambda = match design.lambda_rule {
        LambdaRule::Fixed(v) => v,
        LambdaRule::FracLambdaMax(f) => {
            // analog of lambda_max: the largest off-diagonal covariance
            let n = x.nrows() as f64;
            let mut xc = x.clone();
            for j in 0..xc.ncols() {
                let mean = xc.column(j).mean();
                for i in 0..xc.nrows() {
                    xc[(i, j)] -= mean;
                }
            }
            let s = xc.transpose() * &xc / n;
            let mut lmax = 0.0f64;
            for j in 0..s.nrows() {
                for k in 0..s.ncols() {
                    if j != k {
                        lmax = lmax.max(s[(j, k)].abs());
                    }
                }
            }
            f * lmax
        }
        LambdaRule::Cv { .. } => {
            return Err(Error::InvalidInput("cross-validated penalty is not supported for precision designs".into()))
        }
    };
    let fit = fit_glasso_data(&x, lambda, &GlassoControls::default())?;
    let selected_nonempty = !fit.edge_set.is_empty();
    let screened = match design.screening_filter {
        ScreeningFilter::None => true,
        ScreeningFilter::EdgeSelected(j, k) => fit.edge_set.contains(&(j.min(k), j.max(k))),
        _ => return Err(Error::InvalidInput("precision designs support edge filters only".into())),
    };
    // true precision: identity except the (0,1) block induced by the
    // correlated pair
    let rho = design.feature_correlation;
    let theta_true_01 = -rho / (1.0 - rho * rho);
    let truth_of = |j: usize, k: usize| if (j, k) == (0, 1) { theta_true_01 } else { 0.0 };
    let signal_selected = fit.edge_set.contains(&(0, 1)) && rho != 0.0;
    if !selected_nonempty || !screened {
        return Ok(RepOutcome { rows: Vec::new(), selected_nonempty, screened, signal_selected });
    }
    let report = glasso_infer(&fit, &GlassoInferOptions { level: design.level, null_value: 0.0 })?;
    let mut rows = Vec::new();
    for (row, &(j, k)) in report.rows.iter().zip(fit.edge_set.iter()) {
        let truth = truth_of(j, k);
        let covered = row.ci_lo <= truth && truth <= row.ci_hi;
        let finite = row.ci_lo.is_finite() && row.ci_hi.is_finite();
        rows.push((truth == 0.0, row.pvalue, row.naive_pvalue, covered, finite, row.ci_hi - row.ci_lo));
    }
    Ok(RepOutcome { rows, selected_nonempty, screened, signal_selected })
}

/// Run every replication of a design and pool the outcomes.
pub fn run_design(design: &SimDesign) -> Result<SimReport> {
    design.validate()?;
    let outcomes: Vec<Result<RepOutcome>> = (0..design.replications)
        .into_par_iter()
        .map(|rep| match design.kind {
            DesignKind::Glasso => glasso_replication(design, rep),
            DesignKind::Glm(_) => glm_replication(design, rep),
        })
        .collect();

    let mut counts = ReplicationCounts { attempted: design.replications, selected_nonempty: 0, screened: 0, failed: 0 };
    let mut null_pvalues = Vec::new();
    let mut nonnull_pvalues = Vec::new();
    let mut naive_null = Vec::new();
    let mut naive_nonnull = Vec::new();
    let mut covered = 0usize;
    let mut total_cis = 0usize;
    let mut finite_lengths = Vec::new();
    let mut infinite = 0usize;
    let mut signal_hits = 0usize;
    let mut usable = 0usize;

    for outcome in outcomes {
        match outcome {
            Err(_) => counts.failed += 1,
            Ok(rep) => {
                usable += 1;
                if rep.selected_nonempty {
                    counts.selected_nonempty += 1;
                }
                if rep.screened {
                    counts.screened += 1;
                }
                if rep.signal_selected {
                    signal_hits += 1;
                }
                for (is_null, p, naive, cov, finite, length) in rep.rows {
                    if let Some(p) = p {
                        if is_null {
                            null_pvalues.push(p);
                            naive_null.push(naive);
                        } else {
                            nonnull_pvalues.push(p);
                            naive_nonnull.push(naive);
                        }
                        total_cis += 1;
                        if cov {
                            covered += 1;
                        }
                        if finite {
                            finite_lengths.push(length);
                        } else {
                            infinite += 1;
                        }
                    }
                }
            }
        }
    }
    if counts.failed * 2 > design.replications {
        return Err(Error::Numerical(format!(
            "{} of {} replications failed",
            counts.failed, design.replications
        )));
    }

    let coverage = if total_cis > 0 { covered as f64 / total_cis as f64 } else { f64::NAN };
    let infinite_fraction = if total_cis > 0 { infinite as f64 / total_cis as f64 } else { f64::NAN };
    Ok(SimReport {
        ecdf_grid: ecdf_grid(&null_pvalues),
        ks_statistic: ks_uniform(&null_pvalues),
        naive_ks_statistic: ks_uniform(&naive_null),
        coverage,
        miscoverage: 1.0 - coverage,
        median_finite_length: median(&mut finite_lengths),
        infinite_length_fraction: infinite_fraction,
        counts,
        signal_selection_frequency: if usable > 0 { signal_hits as f64 / usable as f64 } else { f64::NAN },
        null_pvalues,
        nonnull_pvalues,
        naive_null_pvalues: naive_null,
        naive_nonnull_pvalues: naive_nonnull,
    })
}

/// One row of a coverage table.
#[derive(Debug, Clone)]
pub struct CoverageRow {
    pub label: String,
    pub miscoverage: f64,
    pub median_finite_length: f64,
    pub infinite_length_fraction: f64,
    pub pooled_intervals: usize,
}

/// Run several designs and produce the miscoverage / median-length table.
pub fn coverage_table(designs: &[(String, SimDesign)]) -> Result<Vec<CoverageRow>> {
    designs
        .iter()
        .map(|(label, design)| {
            let report = run_design(design)?;
            let pooled = report.null_pvalues.len() + report.nonnull_pvalues.len();
            Ok(CoverageRow {
                label: label.clone(),
                miscoverage: report.miscoverage,
                median_finite_length: report.median_finite_length,
                infinite_length_fraction: report.infinite_length_fraction,
                pooled_intervals: pooled,
            })
        })
        .collect()
}

/// Parse a design from `key = value` lines; `#` starts a comment.
///
/// Keys: `kind` (glm|glasso), `family` (gaussian|logistic|cox), `n`, `p`,
/// `rho`, `beta` (`zeros`, `first:<v>`, or a comma list), `lambda`
/// (`fixed:<v>`, `frac:<f>`, `cv`), `censoring`, `heteroskedastic`,
/// `replications`, `seed`, `screening` (`none`, `screening`, `coord:<j>`,
/// `edge:<j>,<k>`; 1-based), `level`, `cov` (`plugin`, `pairs:<B>`,
/// `sandwich`), `intercept` (true|false), `sigma2` (`plugin` or a value).
pub fn parse_design(text: &str) -> Result<SimDesign> {
    let mut kind: Option<DesignKind> = None;
    let mut family: Option<FamilyKind> = None;
    let mut n = 0usize;
    let mut p = 0usize;
    let mut rho = 0.0f64;
    let mut beta_spec: Option<String> = None;
    let mut lambda_rule = LambdaRule::FracLambdaMax(0.5);
    let mut censoring = None;
    let mut heteroskedastic = None;
    let mut replications = 0usize;
    let mut seed = 0u64;
    let mut screening = ScreeningFilter::None;
    let mut level = 0.90;
    let mut cov = CovarianceMethod::Plugin;
    let mut intercept = true;
    let mut sigma2 = Sigma2Rule::PlugIn;

    let bad = |line: &str, why: &str| Error::InvalidInput(format!("design config: {why}: `{line}`"));
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(line, "expected `key = value`"))?;
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| bad(line, "expected a number"));
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| bad(line, "expected an integer"));
        match key {
            "kind" => {
                kind = Some(match value {
                    "glm" => DesignKind::Glm(FamilyKind::Gaussian), // family fixed below
                    "glasso" => DesignKind::Glasso,
                    _ => return Err(bad(line, "kind must be glm or glasso")),
                })
            }
            "family" => {
                family = Some(match value {
                    "gaussian" => FamilyKind::Gaussian,
                    "logistic" => FamilyKind::Logistic,
                    "cox" => FamilyKind::Cox,
                    _ => return Err(bad(line, "unknown family")),
                })
            }
            "n" => n = parse_usize(value)?,
            "p" => p = parse_usize(value)?,
            "rho" => rho = parse_f64(value)?,
            "beta" => beta_spec = Some(value.to_string()),
            "lambda" => {
                lambda_rule = if value == "cv" {
                    LambdaRule::cv_default()
                } else if let Some(v) = value.strip_prefix("fixed:") {
                    LambdaRule::Fixed(parse_f64(v)?)
                } else if let Some(v) = value.strip_prefix("frac:") {
                    LambdaRule::FracLambdaMax(parse_f64(v)?)
                } else {
                    return Err(bad(line, "lambda must be fixed:<v>, frac:<f>, or cv"));
                }
            }
            "censoring" => censoring = Some(parse_f64(value)?),
            "heteroskedastic" => heteroskedastic = Some(parse_f64(value)?),
            "replications" => replications = parse_usize(value)?,
            "seed" => seed = value.parse::<u64>().map_err(|_| bad(line, "expected an integer"))?,
            "screening" => {
                screening = if value == "none" {
                    ScreeningFilter::None
                } else if value == "screening" {
                    ScreeningFilter::Screening
                } else if let Some(v) = value.strip_prefix("coord:") {
                    let j = parse_usize(v)?;
                    if j == 0 {
                        return Err(bad(line, "coordinates are 1-based"));
                    }
                    ScreeningFilter::CoordSelected(j - 1)
                } else if let Some(v) = value.strip_prefix("edge:") {
                    let parts: Vec<&str> = v.split(',').collect();
                    if parts.len() != 2 {
                        return Err(bad(line, "edge filter needs two indices"));
                    }
                    let j = parse_usize(parts[0].trim())?;
                    let k = parse_usize(parts[1].trim())?;
                    if j == 0 || k == 0 || j == k {
                        return Err(bad(line, "edge indices are distinct and 1-based"));
                    }
                    ScreeningFilter::EdgeSelected(j - 1, k - 1)
                } else {
                    return Err(bad(line, "unknown screening filter"));
                }
            }
            "level" => level = parse_f64(value)?,
            "cov" => {
                cov = if value == "plugin" {
                    CovarianceMethod::Plugin
                } else if value == "sandwich" {
                    CovarianceMethod::Sandwich
                } else if let Some(v) = value.strip_prefix("pairs:") {
                    CovarianceMethod::PairsBootstrap { replicates: parse_usize(v)?, seed: 0 }
                } else {
                    return Err(bad(line, "cov must be plugin, pairs:<B>, or sandwich"));
                }
            }
            "intercept" => {
                intercept = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad(line, "intercept must be true or false")),
                }
            }
            "sigma2" => {
                sigma2 = if value == "plugin" { Sigma2Rule::PlugIn } else { Sigma2Rule::Supplied(parse_f64(value)?) }
            }
            _ => return Err(bad(line, "unknown key")),
        }
    }

    let kind = match (kind, family) {
        (Some(DesignKind::Glasso), _) => DesignKind::Glasso,
        (_, Some(f)) => DesignKind::Glm(f),
        (Some(DesignKind::Glm(_)), None) => {
            return Err(Error::InvalidInput("glm designs need a `family`".into()))
        }
        (None, None) => return Err(Error::InvalidInput("design config needs `kind` or `family`".into())),
    };
    if n == 0 || p == 0 || replications == 0 {
        return Err(Error::InvalidInput("design config needs positive n, p and replications".into()));
    }
    let beta_true = match kind {
        DesignKind::Glasso => Vec::new(),
        DesignKind::Glm(_) => match beta_spec.as_deref() {
            None | Some("zeros") => vec![0.0; p],
            Some(spec) => {
                if let Some(v) = spec.strip_prefix("first:") {
                    let value = v
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad beta spec `{spec}`")))?;
                    let mut b = vec![0.0; p];
                    b[0] = value;
                    b
                } else {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
                    parsed.map_err(|_| Error::InvalidInput(format!("bad beta spec `{spec}`")))?
                }
            }
        },
    };

    let design = SimDesign {
        kind,
        n,
        p,
        feature_correlation: rho,
        beta_true,
        lambda_rule,
        censoring,
        heteroskedastic,
        replications,
        seed,
        screening_filter: screening,
        level,
        covariance_method: cov,
        intercept,
        sigma2_rule: sigma2,
    };
    design.validate()?;
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn null_logistic_design() -> SimDesign {
        SimDesign {
            kind: DesignKind::Glm(FamilyKind::Logistic),
            n: 30,
            p: 10,
            feature_correlation: 0.2,
            beta_true: vec![0.0; 10],
            lambda_rule: LambdaRule::FracLambdaMax(0.5),
            censoring: None,
            heteroskedastic: None,
            replications: 30,
            seed: 7,
            screening_filter: ScreeningFilter::None,
            level: 0.9,
            covariance_method: CovarianceMethod::Plugin,
            intercept: true,
            sigma2_rule: Sigma2Rule::PlugIn,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let design = null_logistic_design();
        let a = generate(&design, 3).unwrap();
        let b = generate(&design, 3).unwrap();
        assert_eq!(a.x, b.x);
        match (&a.response, &b.response) {
            (Response::Binary(ya), Response::Binary(yb)) => assert_eq!(ya, yb),
            _ => panic!(),
        }
        let c = generate(&design, 4).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn equicorrelated_columns_uncorrelated_at_rho_zero() {
        let mut design = null_logistic_design();
        design.kind = DesignKind::Glm(FamilyKind::Gaussian);
        design.feature_correlation = 0.0;
        design.n = 200;
        design.intercept = false;
        let mut mean_abs = 0.0;
        let reps = 20;
        for rep in 0..reps {
            let data = generate(&design, rep).unwrap();
            let mut count = 0;
            let mut acc = 0.0;
            for j in 0..design.p {
                for k in (j + 1)..design.p {
                    let cj = data.x.column(j);
                    let ck = data.x.column(k);
                    let mj = cj.mean();
                    let mk = ck.mean();
                    let mut num = 0.0;
                    let mut dj = 0.0;
                    let mut dk = 0.0;
                    for i in 0..design.n {
                        num += (cj[i] - mj) * (ck[i] - mk);
                        dj += (cj[i] - mj).powi(2);
                        dk += (ck[i] - mk).powi(2);
                    }
                    acc += (num / (dj * dk).sqrt()).abs();
                    count += 1;
                }
            }
            mean_abs += acc / count as f64;
        }
        mean_abs /= reps as f64;
        assert!(mean_abs < 3.0 / (design.n as f64).sqrt(), "mean |corr| = {mean_abs}");
    }

    #[test]
    fn logistic_signal_raises_response_rate() {
        let mut design = null_logistic_design();
        design.beta_true[0] = 5.0;
        design.n = 400;
        let mut hi = 0.0;
        let mut lo = 0.0;
        let (mut nhi, mut nlo) = (0.0, 0.0);
        for rep in 0..10 {
            let data = generate(&design, rep).unwrap();
            let y = match &data.response {
                Response::Binary(y) => y,
                _ => panic!(),
            };
            for i in 0..design.n {
                let x1 = data.x[(i, 1)];
                if x1 > 1.0 {
                    hi += y[i];
                    nhi += 1.0;
                } else if x1 < -1.0 {
                    lo += y[i];
                    nlo += 1.0;
                }
            }
        }
        assert!(hi / nhi > lo / nlo + 0.3);
    }

    #[test]
    fn cox_censoring_calibrated() {
        let mut design = null_logistic_design();
        design.kind = DesignKind::Glm(FamilyKind::Cox);
        design.beta_true = vec![0.0; 10];
        design.censoring = Some(0.5);
        design.n = 100;
        let mut censored = 0.0;
        let mut total = 0.0;
        for rep in 0..200 {
            let data = generate(&design, rep).unwrap();
            if let Response::Survival { status, .. } = &data.response {
                censored += status.iter().filter(|&&s| s == 0.0).count() as f64;
                total += status.len() as f64;
            }
        }
        let frac = censored / total;
        assert!((frac - 0.5).abs() < 0.05, "realized censoring {frac}");
    }

    #[test]
    fn run_design_reproducible() {
        let mut design = null_logistic_design();
        design.replications = 20;
        let a = run_design(&design).unwrap();
        let b = run_design(&design).unwrap();
        assert_eq!(a.null_pvalues, b.null_pvalues);
        assert_eq!(a.ks_statistic, b.ks_statistic);
        assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn ecdf_monotone_and_pvalues_in_range() {
        let mut design = null_logistic_design();
        design.replications = 40;
        let report = run_design(&design).unwrap();
        assert!(report.null_pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
        for w in report.ecdf_grid.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        assert_eq!(report.ecdf_grid.first().unwrap().0, 0.0);
        assert_eq!(report.ecdf_grid.last().unwrap().1, 1.0);
    }

    #[test]
    fn screening_filter_counts() {
        let mut design = null_logistic_design();
        design.beta_true[0] = 5.0;
        design.screening_filter = ScreeningFilter::CoordSelected(0);
        design.replications = 30;
        let report = run_design(&design).unwrap();
        assert!(report.counts.screened <= report.counts.attempted - report.counts.failed);
        // every pooled non-null p-value came from a screened replication
        assert!(report.counts.screened > 0);
    }

    #[test]
    fn parse_design_round_trip() {
        let text = "
            # a comment
            family = logistic
            n = 30
            p = 10
            rho = 0.2
            beta = first:5
            lambda = frac:0.5
            replications = 100
            seed = 11
            screening = coord:1
            level = 0.9
            cov = plugin
            intercept = true
        ";
        let design = parse_design(text).unwrap();
        assert_eq!(design.kind, DesignKind::Glm(FamilyKind::Logistic));
        assert_eq!(design.n, 30);
        assert_eq!(design.beta_true[0], 5.0);
        assert!(design.beta_true[1..].iter().all(|&b| b == 0.0));
        assert_eq!(design.screening_filter, ScreeningFilter::CoordSelected(0));
        assert_eq!(design.lambda_rule, LambdaRule::FracLambdaMax(0.5));
    }

    #[test]
    fn parse_design_rejects_garbage() {
        assert!(parse_design("family = logistic\nn = 0\np = 3\nreplications = 5").is_err());
        assert!(parse_design("nonsense").is_err());
        assert!(parse_design("family = logistic\nn = 10\np = 2\nreplications = 2\nbeta = a,b").is_err());
    }

    #[test]
    fn glasso_design_runs() {
        let design = SimDesign {
            kind: DesignKind::Glasso,
            n: 80,
            p: 8,
            feature_correlation: 0.7,
            beta_true: vec![],
            lambda_rule: LambdaRule::Fixed(0.25),
            censoring: None,
            heteroskedastic: None,
            replications: 10,
            seed: 3,
            screening_filter: ScreeningFilter::EdgeSelected(0, 1),
            level: 0.9,
            covariance_method: CovarianceMethod::Plugin,
            intercept: false,
            sigma2_rule: Sigma2Rule::PlugIn,
        };
        let report = run_design(&design).unwrap();
        assert!(report.counts.screened > 0);
        assert!(!report.nonnull_pvalues.is_empty());
    }
}
