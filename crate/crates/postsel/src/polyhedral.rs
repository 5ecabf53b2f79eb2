//! The polyhedral lemma: truncation limits of a linear functional over
//! `{y : A y <= b}`, the truncated-Gaussian pivot, p-values, and confidence
//! intervals by pivot inversion.
//!
//! Tail arithmetic is done in log space through the scaled survival function
//! (`exp(u^2/2) P(Z > u)`), so pivots stay well-defined for selection events
//! standardized far into the tails where plain CDF differences underflow.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal::{norm_pdf, norm_sf, norm_sf_scaled};

/// Tolerance for "the constraints hold at the observed data": fits are
/// finite-precision, so selection events are rechecked with this slack.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Affine constraint set `{y : A y <= b}`; zero rows mean unconstrained.
#[derive(Debug, Clone)]
pub struct PolyhedralConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl PolyhedralConstraint {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::InvalidInput(format!("A has {} rows but b has {} entries", a.nrows(), b.len())));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite constraint entries".into()));
        }
        Ok(PolyhedralConstraint { a, b })
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    /// Largest violation `(A y - b)_j` at `y`; negative when strictly inside.
    pub fn max_violation(&self, y: &DVector<f64>) -> f64 {
        if self.nrows() == 0 {
            return f64::NEG_INFINITY;
        }
        let slack = &self.a * y - &self.b;
        slack.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Truncation limits for a linear functional over a polyhedron.
#[derive(Debug, Clone, Copy)]
pub struct TruncationBounds {
    pub vlo: f64,
    pub vhi: f64,
    /// Residual constraint slack orthogonal to the functional; `+inf` when no
    /// constraint row is orthogonal. Not used in p-values.
    pub v0: f64,
}

/// A scalar Gaussian restricted to `[vlo, vhi]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedGaussian {
    pub mu: f64,
    pub sigma2: f64,
    pub vlo: f64,
    pub vhi: f64,
}

impl TruncatedGaussian {
    pub fn new(mu: f64, sigma2: f64, vlo: f64, vhi: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidInput(format!("need finite mu and sigma2 > 0, got mu={mu}, sigma2={sigma2}")));
        }
        if !(vlo < vhi) {
            return Err(Error::DegenerateTruncation(format!("empty truncation interval [{vlo}, {vhi}]")));
        }
        let tg = TruncatedGaussian { mu, sigma2, vlo, vhi };
        let (a, b) = tg.standardized();
        if !(a < b) {
            return Err(Error::DegenerateTruncation(format!(
                "interval [{vlo}, {vhi}] collapses after standardizing at mu={mu}"
            )));
        }
        if !log_mass(a, b).is_finite() {
            return Err(Error::DegenerateTruncation(format!(
                "interval [{vlo}, {vhi}] at mu={mu}, sigma={} has vanishing mass",
                sigma2.sqrt()
            )));
        }
        Ok(tg)
    }

    fn standardized(&self) -> (f64, f64) {
        let s = self.sigma2.sqrt();
        ((self.vlo - self.mu) / s, (self.vhi - self.mu) / s)
    }
}

/// `ln P(Z > u)` for all real `u`, including infinities.
fn log_norm_sf(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if u == f64::NEG_INFINITY {
        return 0.0;
    }
    if u >= 0.0 {
        -0.5 * u * u + norm_sf_scaled(u).ln()
    } else {
        // Q(u) = 1 - Q(-u) with Q(-u) <= 1/2
        (-norm_sf(-u)).ln_1p()
    }
}

/// Three-term local expansion of `Phi(hi) - Phi(lo)` for narrow intervals.
fn narrow_mass(lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let m = 0.5 * (lo + hi);
    let m2 = m * m;
    norm_pdf(m) * w * (1.0 + w * w * (m2 - 1.0) / 24.0 + w.powi(4) * (m2 * m2 - 6.0 * m2 + 3.0) / 1920.0)
}

/// `ln(Phi(hi) - Phi(lo))` for `lo < hi`, stable in either tail.
fn log_mass(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    if lo >= 0.0 {
        // right tail: Q(lo) - Q(hi) = Q(lo) * (1 - exp(logQ(hi) - logQ(lo)))
        let la = log_norm_sf(lo);
        let delta = log_norm_sf(hi) - la;
        la + (-delta.exp_m1()).ln()
    } else if hi <= 0.0 {
        log_mass(-hi, -lo)
    } else if hi - lo < 1e-3 {
        narrow_mass(lo, hi).ln()
    } else {
        // straddles zero: both survival terms are <= 1/2, no cancellation risk
        (1.0 - norm_sf(hi) - norm_sf(-lo)).ln()
    }
}

/// Compute the truncation limits of `gamma' y` over `{A y <= b}` given the
/// Gaussian covariance `Sigma` of `y`.
///
/// With `c = Sigma gamma / (gamma' Sigma gamma)` and `r = (I - c gamma') y`,
/// the limits are the extremes of `(b_j - (A r)_j) / (A c)_j` over rows with
/// negative/positive `(A c)_j`; rows with `(A c)_j = 0` feed the residual
/// slack `v0`. The constraints must hold at `y` within [`FEASIBILITY_TOL`].
pub fn truncation_bounds(
    constr: &PolyhedralConstraint,
    sigma: &DMatrix<f64>,
    gamma: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<TruncationBounds> {
    let d = y.len();
    if gamma.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::InvalidInput("dimension mismatch in truncation_bounds".into()));
    }
    if constr.nrows() > 0 && constr.a.ncols() != d {
        return Err(Error::InvalidInput("constraint matrix has wrong width".into()));
    }
    let sg = sigma * gamma;
    let denom = gamma.dot(&sg);
    if !(denom > 0.0) {
        return Err(Error::InvalidInput(format!("gamma' Sigma gamma must be positive, got {denom}")));
    }
    let t_obs = gamma.dot(y);
    if constr.nrows() == 0 {
        return Ok(TruncationBounds { vlo: f64::NEG_INFINITY, vhi: f64::INFINITY, v0: f64::INFINITY });
    }
    let viol = constr.max_violation(y);
    if viol > FEASIBILITY_TOL {
        return Err(Error::InvalidInput(format!(
            "constraints violated at the observed data (max violation {viol:.3e}); selection event inconsistent"
        )));
    }

    let c = &sg / denom;
    let r = y - &c * t_obs;
    let ac = &constr.a * &c;
    let ar = &constr.a * &r;
    let c_norm = c.norm();
    let mut vlo = f64::NEG_INFINITY;
    let mut vhi = f64::INFINITY;
    let mut v0 = f64::INFINITY;
    for j in 0..constr.nrows() {
        let row_norm = constr.a.row(j).norm();
        let num = constr.b[j] - ar[j];
        if ac[j].abs() <= 1e-11 * c_norm * row_norm {
            v0 = v0.min(num);
        } else if ac[j] > 0.0 {
            vhi = vhi.min(num / ac[j]);
        } else {
            vlo = vlo.max(num / ac[j]);
        }
    }
    // feasible-at-y dust may push the observed value a hair past a bound
    if t_obs > vhi {
        if t_obs - vhi <= 1e-6 * (1.0 + vhi.abs()) {
            vhi = t_obs;
        } else {
            return Err(Error::Numerical(format!("observed value {t_obs} above upper truncation {vhi}")));
        }
    }
    if t_obs < vlo {
        if vlo - t_obs <= 1e-6 * (1.0 + vlo.abs()) {
            vlo = t_obs;
        } else {
            return Err(Error::Numerical(format!("observed value {t_obs} below lower truncation {vlo}")));
        }
    }
    Ok(TruncationBounds { vlo, vhi, v0 })
}

/// CDF of the truncated Gaussian at `x`, clamped to [0, 1].
pub fn tg_cdf(tg: &TruncatedGaussian, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput("tg_cdf: x must be finite".into()));
    }
    let (a, b) = tg.standardized();
    let t = ((x - tg.mu) / tg.sigma2.sqrt()).clamp(a, b);
    if t <= a {
        return Ok(0.0);
    }
    if t >= b {
        return Ok(1.0);
    }
    let den = log_mass(a, b);
    if !den.is_finite() {
        return Err(Error::DegenerateTruncation("truncation interval mass underflows".into()));
    }
    Ok((log_mass(a, t) - den).exp().clamp(0.0, 1.0))
}

/// Upper-tail probability `P(T > x)` computed directly for full relative
/// precision near 1-sided rejections.
fn tg_sf(tg: &TruncatedGaussian, x: f64) -> Result<f64> {
    let (a, b) = tg.standardized();
    let t = ((x - tg.mu) / tg.sigma2.sqrt()).clamp(a, b);
    if t <= a {
        return Ok(1.0);
    }
    if t >= b {
        return Ok(0.0);
    }
    let den = log_mass(a, b);
    if !den.is_finite() {
        return Err(Error::DegenerateTruncation("truncation interval mass underflows".into()));
    }
    Ok((log_mass(t, b) - den).exp().clamp(0.0, 1.0))
}

/// Alternative hypothesis for [`tg_pvalue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

/// P-value of the truncated-Gaussian pivot at the hypothesized mean carried
/// by `tg`, observing `x`.
pub fn tg_pvalue(tg: &TruncatedGaussian, x: f64, alternative: Alternative) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput("tg_pvalue: x must be finite".into()));
    }
    match alternative {
        Alternative::Greater => tg_sf(tg, x),
        Alternative::Less => tg_cdf(tg, x),
        Alternative::TwoSided => {
            let f = tg_cdf(tg, x)?;
            let s = tg_sf(tg, x)?;
            Ok((2.0 * f.min(s)).clamp(0.0, 1.0))
        }
    }
}

/// Confidence interval for the mean by inverting the pivot: all `mu` with
/// `alpha/2 <= F_mu(x) <= 1 - alpha/2`. Endpoints may be infinite.
///
/// The pivot is strictly decreasing in `mu`, so each endpoint is found by
/// bisection with an expanding bracket; an endpoint beyond `1e6 * sigma` from
/// the observation is reported infinite.
pub fn tg_interval(sigma2: f64, vlo: f64, vhi: f64, x: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must be in (0,1), got {level}")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(vlo < vhi) || !x.is_finite() || !(x > vlo && x < vhi) {
        return Err(Error::InvalidInput(format!("need vlo < x < vhi, got vlo={vlo}, x={x}, vhi={vhi}")));
    }
    let alpha = 1.0 - level;
    let sigma = sigma2.sqrt();
    let pivot = |mu: f64| -> Result<f64> {
        let tg = TruncatedGaussian::new(mu, sigma2, vlo, vhi)?;
        tg_cdf(&tg, x)
    };
    // F(mu) decreases from 1 to 0; lower endpoint solves F = 1 - alpha/2,
    // upper endpoint solves F = alpha/2.
    let lower = invert_pivot(&pivot, x, sigma, 1.0 - alpha / 2.0)?;
    let upper = invert_pivot(&pivot, x, sigma, alpha / 2.0)?;
    Ok((lower, upper))
}

const BRACKET_LIMIT_SIGMAS: f64 = 1e6;

fn invert_pivot(pivot: &dyn Fn(f64) -> Result<f64>, x: f64, sigma: f64, target: f64) -> Result<f64> {
    // find lo with F(lo) >= target and hi with F(hi) <= target
    let mut lo = x - sigma;
    let mut step = sigma;
    loop {
        match pivot(lo) {
            Ok(f) if f >= target => break,
            Ok(_) | Err(Error::DegenerateTruncation(_)) => {
                step *= 2.0;
                lo -= step;
                if (x - lo) > BRACKET_LIMIT_SIGMAS * sigma {
                    return Ok(f64::NEG_INFINITY);
                }
            }
            Err(e) => return Err(e),
        }
    }
    let mut hi = x + sigma;
    let mut step = sigma;
    loop {
        match pivot(hi) {
            Ok(f) if f <= target => break,
            Ok(_) | Err(Error::DegenerateTruncation(_)) => {
                step *= 2.0;
                hi += step;
                if (hi - x) > BRACKET_LIMIT_SIGMAS * sigma {
                    return Ok(f64::INFINITY);
                }
            }
            Err(e) => return Err(e),
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = match pivot(mid) {
            Ok(f) => f,
            // mass vanished mid-bracket: treat as the saturated side
            Err(Error::DegenerateTruncation(_)) => {
                if mid > x {
                    0.0
                } else {
                    1.0
                }
            }
            Err(e) => return Err(e),
        };
        if (f - target).abs() <= 1e-8 && (hi - lo) <= 1e-6 * sigma {
            return Ok(mid);
        }
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * sigma.max(mid.abs()) {
            return Ok(mid);
        }
    }
    Ok(mid)
}
