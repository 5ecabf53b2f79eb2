//! Selective inference for l1-penalized likelihood models.
//!
//! Fits lasso-penalized Gaussian, logistic and Cox regressions and the
//! graphical lasso, then produces p-values and confidence intervals for the
//! selected coefficients that are valid conditional on the selection event,
//! via the one-step estimator and the truncated-Gaussian polyhedral lemma.
//!
//! The main entry points:
//! - [`lasso_solver::fit_lasso`] / [`lasso_solver::lambda_max`] /
//!   [`lasso_solver::cross_validate_lambda`] for fitting;
//! - [`selective_glm::infer`] for post-selection p-values and intervals;
//! - [`graphical_lasso::fit_glasso`] / [`graphical_lasso::glasso_infer`] for
//!   sparse precision matrices;
//! - [`sim_harness::run_design`] for end-to-end simulation studies.

pub mod error;
pub mod graphical_lasso;
pub mod lasso_solver;
pub mod model_family;
pub mod normal;
pub mod polyhedral;
pub mod selective_glm;
pub mod sim_harness;

pub use error::{Error, Result};
pub use graphical_lasso::{fit_glasso, glasso_hessian, glasso_infer, GlassoHessian, PrecisionFit};
pub use lasso_solver::{
    cross_validate_lambda, fit_lasso, kkt_check, lambda_max, CvResult, KktReport, LassoFit, PenaltySpec,
    SolverControls,
};
pub use model_family::{
    local_quadratic, log_likelihood, observed_information, score, Dataset, FamilyKind, FamilySpec,
    LocalQuadratic, Response, Weights,
};
pub use polyhedral::{
    tg_cdf, tg_interval, tg_pvalue, truncation_bounds, Alternative, PolyhedralConstraint, TruncatedGaussian,
    TruncationBounds,
};
pub use selective_glm::{
    active_constraints, infer, one_step, pairs_bootstrap_cov, sandwich_cov, CovarianceMethod, InferOptions,
    OneStepEstimate, SelectiveReport, SelectiveRow,
};
pub use sim_harness::{coverage_table, generate, run_design, SimDesign, SimReport};
