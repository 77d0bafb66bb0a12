//! Risk and prevalence ratios for binary outcomes.
//!
//! The central estimator solves the log-linear estimating equations
//! `sum_i x_i (y_i - exp(x_i b)) = 0` (the "robust Poisson" fit) and
//! reports a sandwich covariance, valid without any Poisson assumption.
//! Constrained log-binomial maximum likelihood is provided for comparison,
//! together with a seeded simulation study runner.

pub mod cli;
pub mod data;
pub mod design;
pub mod ee;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod logbin;
pub mod rng;
pub mod sim;

pub use data::Dataset;
pub use design::{build_design_matrix, parse_terms, rcs_basis, DesignMatrix, Term};
pub use ee::{
    ee_jacobian, ee_score, fit_poisson_irls, fit_robust_poisson, poisson_loglik, sandwich_covariance,
    sandwich_liang_zeger, EeProblem, FitResult, NewtonOptions,
};
pub use error::{Error, Result};
pub use inference::{bootstrap_rr, coefficient_rr, marginal_rr, Estimand, IntervalMethod, RrEstimate};
pub use logbin::{fit_logbin_barrier, fit_logbin_ml, logbin_gradient, logbin_hessian, logbin_loglik, LogBinFit};
