//! Log-binomial maximum likelihood under `exp(x_i b) <= 1`.
//!
//! Two fitters: Newton with step truncation and halving (the usual
//! algorithm, which stalls when the optimum sits on the boundary of the
//! parameter space), and a log-barrier path-following method that keeps
//! every iterate strictly feasible.

use nalgebra::{DMatrix, DVector};

use crate::ee::{fit_robust_poisson, intercept_column};
use crate::error::{Error, Result};
use crate::linalg::{self, MAX_CONDITION};

/// Iterates keep `max_i x_i b <= -FEASIBILITY_MARGIN`.
pub const FEASIBILITY_MARGIN: f64 = 1e-10;
/// A fit is on the boundary when some `x_i b` is within this of 0.
pub const BOUNDARY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBinOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Consecutive truncated steps without progress before ML gives up.
    pub stall_limit: usize,
    pub barrier_start: f64,
    pub barrier_end: f64,
    pub barrier_factor: f64,
    pub inner_iter: usize,
}

impl Default for LogBinOptions {
    fn default() -> Self {
        LogBinOptions {
            grad_tol: 1e-8,
            step_tol: 1e-10,
            max_iter: 100,
            max_halvings: 30,
            stall_limit: 5,
            barrier_start: 1.0,
            barrier_end: 1e-8,
            barrier_factor: 0.1,
            inner_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierStep {
    pub t: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct LogBinFit {
    pub beta: DVector<f64>,
    /// Inverse observed information.
    pub cov_model: DMatrix<f64>,
    pub converged: bool,
    pub on_boundary: bool,
    pub loglik: f64,
    pub iterations: usize,
    /// Barrier objective after every accepted inner step (barrier fits only).
    pub barrier_history: Vec<BarrierStep>,
}

impl LogBinFit {
    pub fn se(&self, j: usize) -> f64 {
        self.cov_model[(j, j)].max(0.0).sqrt()
    }

    pub fn max_fitted(&self, x: &DMatrix<f64>) -> f64 {
        (x * &self.beta).iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp()
    }
}

fn eta_checked(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let eta = x * beta;
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 || max.is_nan() {
        return Err(Error::InfeasiblePoint(max));
    }
    Ok(eta)
}

fn loglik_eta(eta: &DVector<f64>, y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let mut v = yi * e;
            if yi < 1.0 {
                v += (1.0 - yi) * (-e.exp_m1()).ln();
            }
            v
        })
        .sum()
}

/// Per-observation gradient factor and negative Hessian weight.
fn derivs_eta(eta: &DVector<f64>, y: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let n = eta.len();
    let mut g = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let mu = eta[i].exp();
        let q = -eta[i].exp_m1();
        g[i] = y[i] - (1.0 - y[i]) * mu / q;
        w[i] = (1.0 - y[i]) * mu / (q * q);
    }
    (g, w)
}

fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (mut row, &wi) in wx.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    x.tr_mul(&wx)
}

/// `sum [y eta + (1 - y) log(1 - exp(eta))]`; errors outside `eta <= 0`.
pub fn logbin_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<f64> {
    Ok(loglik_eta(&eta_checked(x, beta)?, y))
}

pub fn logbin_gradient(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DVector<f64>> {
    let (g, _) = derivs_eta(&eta_checked(x, beta)?, y);
    Ok(x.tr_mul(&g))
}

pub fn logbin_hessian(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (_, w) = derivs_eta(&eta_checked(x, beta)?, y);
    Ok(-weighted_gram(x, &w))
}

fn check_shapes(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("x has {} rows, y has {}", x.nrows(), y.len())));
    }
    if x.ncols() > x.nrows() {
        return Err(Error::TooManyParameters {
            n: x.nrows(),
            p: x.ncols(),
        });
    }
    Ok(())
}

fn model_covariance(x: &DMatrix<f64>, y: &[f64], eta: &DVector<f64>) -> DMatrix<f64> {
    let (_, w) = derivs_eta(eta, y);
    let info = weighted_gram(x, &w);
    linalg::inverse(&info)
        .map(|mut c| {
            linalg::symmetrize(&mut c);
            c
        })
        .unwrap_or_else(|| DMatrix::from_element(x.ncols(), x.ncols(), f64::NAN))
}

fn intercept_start(x: &DMatrix<f64>, y: &[f64]) -> Option<DVector<f64>> {
    let j = intercept_column(x)?;
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let mut b = DVector::zeros(x.ncols());
    b[j] = ybar.clamp(0.5 / n, 1.0 - 0.5 / n).ln();
    Some(b)
}

/// Log-binomial ML by Newton's method, started the way the usual GLM fitter
/// starts binomial models: from fitted means `(y + 1/2) / 2`, whose
/// Fisher-scoring update gives the first coefficient vector. If that first vector is infeasible there is no
/// previous iterate to fall back to and the fit fails. Later steps are
/// halved toward the previous iterate until feasible and non-decreasing in
/// likelihood. Returns [`Error::NonConvergence`] on an infeasible first
/// iterate, the iteration cap, or stalling against the boundary.
pub fn fit_logbin_ml(x: &DMatrix<f64>, y: &[f64]) -> Result<LogBinFit> {
    fit_logbin_ml_with(x, y, &LogBinOptions::default())
}

/// Fisher-scoring step `(X^T W X)^{-1} X^T W (z - eta)` with
/// `W = mu / (1 - mu)` and `z - eta = (y - mu) / mu`.
fn scoring_step(x: &DMatrix<f64>, y: &[f64], eta: &DVector<f64>) -> Result<DVector<f64>> {
    let n = eta.len();
    let mut w = DVector::zeros(n);
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let mu = eta[i].exp();
        let q = -eta[i].exp_m1();
        w[i] = mu / q;
        g[i] = (y[i] - mu) / q;
    }
    let info = weighted_gram(x, &w);
    match linalg::solve_spd(&info, &x.tr_mul(&g)) {
        Some(s) if s.condition <= MAX_CONDITION && s.x.iter().all(|v| v.is_finite()) => Ok(s.x),
        Some(s) => Err(Error::SingularJacobian(s.condition)),
        None => Err(Error::SingularJacobian(f64::INFINITY)),
    }
}

fn eta_weights(eta: &DVector<f64>, y: &[f64]) -> DVector<f64> {
    derivs_eta(eta, y).1
}

/// Newton step on the observed information, which is positive semidefinite
/// everywhere on the feasible region.
fn newton_step(x: &DMatrix<f64>, g: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    match linalg::solve_spd(&weighted_gram(x, w), &x.tr_mul(g)) {
        Some(s) if s.condition <= MAX_CONDITION && s.x.iter().all(|v| v.is_finite()) => Ok(s.x),
        Some(s) => Err(Error::SingularJacobian(s.condition)),
        None => Err(Error::SingularJacobian(f64::INFINITY)),
    }
}

pub fn fit_logbin_ml_with(x: &DMatrix<f64>, y: &[f64], opts: &LogBinOptions) -> Result<LogBinFit> {
    check_shapes(x, y)?;
    let n = y.len() as f64;
    let tol = opts.grad_tol * n;
    let feasible = |eta: &DVector<f64>| eta.max() <= -FEASIBILITY_MARGIN;

    // First iterate: weighted least squares of the working response at the
    // starting means on the columns of x.
    let eta_start = DVector::from_iterator(y.len(), y.iter().map(|&v| ((v + 0.5) / 2.0).ln()));
    let mut w = DVector::zeros(y.len());
    let mut wz = DVector::zeros(y.len());
    for i in 0..y.len() {
        let mu = eta_start[i].exp();
        w[i] = mu / (1.0 - mu);
        wz[i] = w[i] * (eta_start[i] + (y[i] - mu) / mu);
    }
    let mut beta = match linalg::solve_spd(&weighted_gram(x, &w), &x.tr_mul(&wz)) {
        Some(s) if s.condition <= MAX_CONDITION => s.x,
        Some(s) => return Err(Error::SingularJacobian(s.condition)),
        None => return Err(Error::SingularJacobian(f64::INFINITY)),
    };
    let mut eta = x * &beta;
    if !feasible(&eta) {
        return Err(Error::NonConvergence {
            iterations: 1,
            max_abs_score: f64::INFINITY,
        });
    }
    let mut ll = loglik_eta(&eta, y);
    let mut stalled = 0;
    let mut grad_norm = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        let (g, _) = derivs_eta(&eta, y);
        grad_norm = linalg::max_abs(&x.tr_mul(&g));
        let step = newton_step(x, &g, &eta_weights(&eta, y)).or_else(|_| scoring_step(x, y, &eta))?;
        if grad_norm < tol && linalg::max_abs(&step) < opts.step_tol {
            return Ok(LogBinFit {
                cov_model: model_covariance(x, y, &eta),
                on_boundary: eta.max() > -BOUNDARY_EPS,
                beta,
                converged: true,
                loglik: ll,
                iterations: iter,
                barrier_history: Vec::new(),
            });
        }
        if iter == opts.max_iter {
            break;
        }
        // Below this predicted gain the likelihood comparison is rounding noise.
        let negligible = x.tr_mul(&g).dot(&step) < 1e-12 * (1.0 + ll.abs());
        let mut s = 1.0;
        let mut truncated = false;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand = &beta + &step * s;
            let eta_c = x * &cand;
            if feasible(&eta_c) {
                let ll_c = loglik_eta(&eta_c, y);
                if ll_c >= ll || (negligible && !truncated) {
                    let gain = ll_c - ll;
                    beta = cand;
                    eta = eta_c;
                    ll = ll_c;
                    accepted = true;
                    if truncated && gain < 1e-10 * (1.0 + ll.abs()) {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                    break;
                }
            } else {
                truncated = true;
            }
            s *= 0.5;
        }
        if !accepted {
            if grad_norm < tol {
                // Working precision reached; no further ascent is possible.
                return Ok(LogBinFit {
                    cov_model: model_covariance(x, y, &eta),
                    on_boundary: eta.max() > -BOUNDARY_EPS,
                    beta,
                    converged: true,
                    loglik: ll,
                    iterations: iter,
                    barrier_history: Vec::new(),
                });
            }
            stalled += 1;
        }
        if stalled >= opts.stall_limit {
            return Err(Error::NonConvergence {
                iterations: iter,
                max_abs_score: grad_norm,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        max_abs_score: grad_norm,
    })
}

fn barrier_objective(eta: &DVector<f64>, y: &[f64], t: f64) -> f64 {
    loglik_eta(eta, y) + t * eta.iter().map(|&e| (-e).ln()).sum::<f64>()
}

fn feasible_start(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    let base = intercept_start(x, y);
    let strictly = |b: &DVector<f64>| (x * b).max() < -FEASIBILITY_MARGIN;
    if let Ok(rp) = fit_robust_poisson(x, y) {
        if rp.beta.iter().all(|v| v.is_finite()) {
            if strictly(&rp.beta) {
                return Ok(rp.beta);
            }
            if let Some(b0) = &base {
                let mut s = 0.5;
                for _ in 0..30 {
                    let cand = b0 + (&rp.beta - b0) * s;
                    if strictly(&cand) {
                        return Ok(cand);
                    }
                    s *= 0.5;
                }
            }
        }
    }
    match base {
        Some(b) if strictly(&b) => Ok(b),
        _ => Err(Error::NoFeasibleStart),
    }
}

/// Log-binomial ML by a log-barrier method: maximizes
/// `loglik + t sum log(-x_i b)` by damped Newton for a decreasing sequence
/// of `t`, warm-starting each stage at the previous solution.
pub fn fit_logbin_barrier(x: &DMatrix<f64>, y: &[f64]) -> Result<LogBinFit> {
    fit_logbin_barrier_with(x, y, &LogBinOptions::default())
}

pub fn fit_logbin_barrier_with(x: &DMatrix<f64>, y: &[f64], opts: &LogBinOptions) -> Result<LogBinFit> {
    check_shapes(x, y)?;
    let n = y.len() as f64;
    let mut beta = feasible_start(x, y)?;
    let mut eta = x * &beta;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut t = opts.barrier_start;
    let mut all_inner_converged = true;

    loop {
        let mut obj = barrier_objective(&eta, y, t);
        history.push(BarrierStep { t, objective: obj });
        let mut inner_done = false;
        for _ in 0..opts.inner_iter {
            let (g, w) = derivs_eta(&eta, y);
            let mut gfac = g.clone();
            let mut wfac = w.clone();
            for i in 0..eta.len() {
                gfac[i] += t / eta[i];
                wfac[i] += t / (eta[i] * eta[i]);
            }
            let grad = x.tr_mul(&gfac);
            let hess = weighted_gram(x, &wfac);
            let step = match linalg::solve_spd(&hess, &grad) {
                Some(s) if s.condition <= MAX_CONDITION => s.x,
                Some(s) => return Err(Error::SingularJacobian(s.condition)),
                None => return Err(Error::SingularJacobian(f64::INFINITY)),
            };
            let decrement = grad.dot(&step);
            if decrement < 1e-14 * (1.0 + n) || linalg::max_abs(&step) < opts.step_tol {
                inner_done = true;
                break;
            }
            iterations += 1;
            let deta = x * &step;
            // Stay strictly inside: at most 99% of the distance to eta = 0.
            let mut s = 1.0f64;
            for (&e, &d) in eta.iter().zip(deta.iter()) {
                if d > 0.0 {
                    s = s.min(0.99 * (-e) / d);
                }
            }
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let cand = &beta + &step * s;
                let eta_c = x * &cand;
                if eta_c.iter().all(|&e| e < 0.0) {
                    let obj_c = barrier_objective(&eta_c, y, t);
                    if obj_c >= obj {
                        beta = cand;
                        eta = eta_c;
                        obj = obj_c;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // No ascent possible at working precision.
                inner_done = true;
                break;
            }
            history.push(BarrierStep { t, objective: obj });
        }
        all_inner_converged &= inner_done;
        if t <= opts.barrier_end * (1.0 + 1e-9) {
            break;
        }
        t *= opts.barrier_factor;
    }

    if !all_inner_converged {
        return Err(Error::NonConvergence {
            iterations,
            max_abs_score: linalg::max_abs(&logbin_gradient(x, y, &beta)?),
        });
    }
    let grad = logbin_gradient(x, y, &beta)?;
    let on_boundary = eta.max() > -BOUNDARY_EPS || linalg::max_abs(&grad) > 1e-3 * (1.0 + n).sqrt();
    Ok(LogBinFit {
        cov_model: model_covariance(x, y, &eta),
        loglik: loglik_eta(&eta, y),
        beta,
        converged: true,
        on_boundary,
        iterations,
        barrier_history: history,
    })
}
