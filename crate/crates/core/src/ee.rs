//! Log-linear estimating equations `sum_i M_i (y_i - exp(x_i b)) = 0` and
//! their sandwich covariance (the robust Poisson estimator).
//!
//! With the default instruments `M_i = x_i` the equations are the Poisson
//! score equations, but no Poisson assumption is needed for the estimator
//! or the sandwich variance to be valid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, MAX_CONDITION};

/// Linear predictors above this overflow `exp` for practical purposes.
pub const MAX_ETA: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence requires `max |score| < score_tol * n`.
    pub score_tol: f64,
    /// ... and `max |step| < step_tol`.
    pub step_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            score_tol: 1e-8,
            step_tol: 1e-10,
            max_iter: 100,
            max_halvings: 30,
        }
    }
}

/// Estimating-equation problem with an optional instrument matrix. When
/// `instruments` is `None` the rows of `x` are used.
#[derive(Debug, Clone, Copy)]
pub struct EeProblem<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
    pub instruments: Option<&'a DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub cov_sandwich: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_score: f64,
    pub mu_hat: Vec<f64>,
    /// Number of fitted means above 1 (kept, never clamped).
    pub n_mu_gt1: usize,
    pub condition_estimate: f64,
    /// All outcomes equal.
    pub degenerate_outcome: bool,
}

impl FitResult {
    pub fn se(&self, j: usize) -> f64 {
        self.cov_sandwich[(j, j)].max(0.0).sqrt()
    }
}

fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Dimension("non-finite coefficient".into()));
    }
    let eta = x * beta;
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > MAX_ETA {
        return Err(Error::Overflow(max));
    }
    Ok(eta)
}

impl<'a> EeProblem<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a [f64]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!("x has {} rows, y has {}", x.nrows(), y.len())));
        }
        if x.ncols() > x.nrows() {
            return Err(Error::TooManyParameters {
                n: x.nrows(),
                p: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("design matrix has non-finite entries".into()));
        }
        Ok(EeProblem {
            x,
            y,
            instruments: None,
        })
    }

    pub fn with_instruments(mut self, m: &'a DMatrix<f64>) -> Result<Self> {
        if m.shape() != self.x.shape() {
            return Err(Error::Dimension(format!(
                "instrument matrix is {:?}, design is {:?}",
                m.shape(),
                self.x.shape()
            )));
        }
        self.instruments = Some(m);
        Ok(self)
    }

    fn m(&self) -> &DMatrix<f64> {
        self.instruments.unwrap_or(self.x)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn mu(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(linear_predictor(self.x, beta)?.map(f64::exp))
    }

    fn score_at(&self, mu: &DVector<f64>) -> DVector<f64> {
        let resid = DVector::from_iterator(self.n(), self.y.iter().zip(mu.iter()).map(|(y, m)| y - m));
        self.m().tr_mul(&resid)
    }

    /// `sum_i M_i x_i^T mu_i`, the negative Jacobian of the score.
    fn bread_at(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let mut weighted = self.x.clone();
        for (mut row, &w) in weighted.row_iter_mut().zip(mu.iter()) {
            row *= w;
        }
        self.m().tr_mul(&weighted)
    }

    pub fn score(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.score_at(&self.mu(beta)?))
    }

    /// Derivative of the score with respect to `beta`.
    pub fn jacobian(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-self.bread_at(&self.mu(beta)?))
    }

    /// `B^{-1} W B^{-T}` with `B = sum M_i x_i^T mu_i`, `W = sum M_i M_i^T (y_i - mu_i)^2`.
    pub fn sandwich(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mu = self.mu(beta)?;
        let bread = self.bread_at(&mu);
        let m = self.m();
        let mut scaled = m.clone();
        for ((mut row, &y), &mu) in scaled.row_iter_mut().zip(self.y).zip(mu.iter()) {
            row *= y - mu;
        }
        let meat = scaled.tr_mul(&scaled);
        let inv = linalg::inverse(&bread).ok_or(Error::SingularBread)?;
        let mut cov = &inv * meat * inv.transpose();
        linalg::symmetrize(&mut cov);
        Ok(cov)
    }

    fn newton_step(&self, mu: &DVector<f64>, score: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let bread = self.bread_at(mu);
        let solved = if self.instruments.is_none() {
            linalg::solve_spd(&bread, score)
        } else {
            linalg::solve_general(&bread, score)
        };
        match solved {
            Some(s) if s.condition <= MAX_CONDITION && s.x.iter().all(|v| v.is_finite()) => Ok((s.x, s.condition)),
            Some(s) => Err(Error::SingularJacobian(s.condition)),
            None => Err(Error::SingularJacobian(f64::INFINITY)),
        }
    }

    /// Newton's method with step halving on the sup-norm of the score.
    pub fn solve(&self, opts: &NewtonOptions) -> Result<FitResult> {
        let n = self.n();
        let p = self.x.ncols();
        let ybar = self.y.iter().sum::<f64>() / n as f64;
        let degenerate = self.y.iter().all(|&v| v == self.y[0]);
        let intercept = intercept_column(self.x);

        if degenerate && p == 1 && intercept == Some(0) {
            let beta0 = ybar.ln();
            return Ok(FitResult {
                beta: DVector::from_element(1, beta0),
                cov_sandwich: DMatrix::zeros(1, 1),
                converged: true,
                iterations: 0,
                max_abs_score: 0.0,
                mu_hat: vec![ybar; n],
                n_mu_gt1: 0,
                condition_estimate: 1.0,
                degenerate_outcome: true,
            });
        }

        let mut beta = DVector::zeros(p);
        if let Some(j) = intercept {
            beta[j] = ybar.max(1.0 / (2.0 * n as f64)).ln();
        }
        let tol = opts.score_tol * n as f64;
        let mut mu = self.mu(&beta)?;
        let mut score = self.score_at(&mu);
        let mut norm = linalg::max_abs(&score);
        let mut condition = f64::NAN;

        for iter in 0..=opts.max_iter {
            let (step, cond) = self.newton_step(&mu, &score)?;
            condition = cond;
            if norm < tol && linalg::max_abs(&step) < opts.step_tol {
                return self.finish(beta, iter, norm, condition, degenerate);
            }
            if iter == opts.max_iter {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            let mut overflowed = None;
            for _ in 0..=opts.max_halvings {
                let cand = &beta + &step * t;
                match self.mu(&cand) {
                    Ok(mu_c) => {
                        let score_c = self.score_at(&mu_c);
                        let norm_c = linalg::max_abs(&score_c);
                        if norm_c <= norm || norm_c < tol {
                            beta = cand;
                            mu = mu_c;
                            score = score_c;
                            norm = norm_c;
                            accepted = true;
                            break;
                        }
                    }
                    Err(Error::Overflow(v)) => overflowed = Some(v),
                    Err(e) => return Err(e),
                }
                t *= 0.5;
            }
            if !accepted {
                if norm < tol {
                    // Converged to working precision; the step cannot be shrunk further.
                    return self.finish(beta, iter, norm, condition, degenerate);
                }
                return Err(match overflowed {
                    Some(v) => Error::Overflow(v),
                    None => Error::NonConvergence {
                        iterations: iter,
                        max_abs_score: norm,
                    },
                });
            }
        }
        let _ = condition;
        Err(Error::NonConvergence {
            iterations: opts.max_iter,
            max_abs_score: norm,
        })
    }

    fn finish(
        &self,
        beta: DVector<f64>,
        iterations: usize,
        max_abs_score: f64,
        condition_estimate: f64,
        degenerate_outcome: bool,
    ) -> Result<FitResult> {
        let cov_sandwich = self.sandwich(&beta)?;
        let mu_hat: Vec<f64> = self.mu(&beta)?.iter().copied().collect();
        let n_mu_gt1 = mu_hat.iter().filter(|&&m| m > 1.0).count();
        Ok(FitResult {
            beta,
            cov_sandwich,
            converged: true,
            iterations,
            max_abs_score,
            mu_hat,
            n_mu_gt1,
            condition_estimate,
            degenerate_outcome,
        })
    }
}

/// Index of the first column that is identically 1.
pub fn intercept_column(x: &DMatrix<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0))
}

/// Robust Poisson fit with default instruments and solver settings.
pub fn fit_robust_poisson(x: &DMatrix<f64>, y: &[f64]) -> Result<FitResult> {
    EeProblem::new(x, y)?.solve(&NewtonOptions::default())
}

/// `sum_i x_i (y_i - exp(x_i b))`.
pub fn ee_score(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DVector<f64>> {
    EeProblem::new(x, y)?.score(beta)
}

/// `-sum_i x_i x_i^T exp(x_i b)`.
pub fn ee_jacobian(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    EeProblem::new(x, y)?.jacobian(beta)
}

pub fn sandwich_covariance(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    EeProblem::new(x, y)?.sandwich(beta)
}

/// The same covariance assembled in the GEE form with derivative
/// `D_i = mu_i x_i` and working variance `V_i = mu_i`:
/// `(sum D V^-1 D^T)^-1 (sum D V^-1 r^2 V^-1 D^T) (sum D V^-1 D^T)^-1`.
pub fn sandwich_liang_zeger(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let prob = EeProblem::new(x, y)?;
    let mu = prob.mu(beta)?;
    let p = x.ncols();
    let mut bread = DMatrix::zeros(p, p);
    let mut meat = DMatrix::zeros(p, p);
    for (i, row) in x.row_iter().enumerate() {
        let d = row.transpose() * mu[i];
        let vinv = 1.0 / mu[i];
        let r = y[i] - mu[i];
        bread += &d * d.transpose() * vinv;
        meat += &d * d.transpose() * (vinv * r * r * vinv);
    }
    let inv = linalg::inverse(&bread).ok_or(Error::SingularBread)?;
    let mut cov = &inv * meat * &inv;
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// Poisson log-likelihood `sum [y eta - exp(eta) - log(y!)]`; a diagnostic
/// only, the estimator never uses it.
pub fn poisson_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Result<f64> {
    let eta = linear_predictor(x, beta)?;
    Ok(eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| yi * e - e.exp() - log_factorial(yi))
        .sum())
}

fn log_factorial(y: f64) -> f64 {
    (2..=(y as u64)).map(|k| (k as f64).ln()).sum()
}

/// Iteratively reweighted least squares with weights `exp(x_i b)` and the
/// working response `eta + (y - mu) / mu`, each step solved by QR of the
/// row-scaled design. Algebraically equivalent to [`fit_robust_poisson`].
pub fn fit_poisson_irls(x: &DMatrix<f64>, y: &[f64], opts: &NewtonOptions) -> Result<DVector<f64>> {
    let prob = EeProblem::new(x, y)?;
    let n = prob.n();
    let p = x.ncols();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut beta = DVector::zeros(p);
    if let Some(j) = intercept_column(x) {
        beta[j] = ybar.max(1.0 / (2.0 * n as f64)).ln();
    }
    for iter in 0..opts.max_iter {
        let eta = linear_predictor(x, &beta)?;
        let mut sx = x.clone();
        let mut sz = DVector::zeros(n);
        for i in 0..n {
            let mu = eta[i].exp();
            let w = mu.sqrt();
            sx.row_mut(i).scale_mut(w);
            sz[i] = w * (eta[i] + (y[i] - mu) / mu);
        }
        let qr = sx.qr();
        let rhs = qr.q().tr_mul(&sz);
        let r = qr.r();
        let next = r
            .solve_upper_triangular(&rhs)
            .ok_or(Error::SingularJacobian(f64::INFINITY))?;
        let mut step = &next - &beta;
        let mut halvings = 0;
        while linear_predictor(x, &(&beta + &step)).is_err() {
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(Error::Overflow(MAX_ETA));
            }
            step *= 0.5;
        }
        beta += &step;
        if linalg::max_abs(&step) < opts.step_tol {
            return Ok(beta);
        }
        if iter + 1 == opts.max_iter {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        max_abs_score: linalg::max_abs(&prob.score(&beta)?),
    })
}
