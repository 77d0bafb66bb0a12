//! Risk-ratio estimands from fitted log-linear models: coefficient
//! (conditional) ratios with Wald intervals, standardized (marginal)
//! ratios with delta-method intervals, and a percentile bootstrap.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::design::spline::quantile_sorted;
use crate::design::{Design, DesignMatrix};
use crate::ee::FitResult;
use crate::error::{Error, Result};
use crate::logbin::LogBinFit;
use crate::rng;

/// Coefficients and covariance of any fitted log-linear model.
pub trait LogLinearFit {
    fn beta(&self) -> &DVector<f64>;
    fn covariance(&self) -> &DMatrix<f64>;
    fn interval_method(&self) -> IntervalMethod;
}

impl LogLinearFit for FitResult {
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    fn covariance(&self) -> &DMatrix<f64> {
        &self.cov_sandwich
    }
    fn interval_method(&self) -> IntervalMethod {
        IntervalMethod::WaldSandwich
    }
}

impl LogLinearFit for LogBinFit {
    fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    fn covariance(&self) -> &DMatrix<f64> {
        &self.cov_model
    }
    fn interval_method(&self) -> IntervalMethod {
        IntervalMethod::WaldModel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimand {
    Coefficient { column: String },
    Marginal { a1: f64, a0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IntervalMethod {
    WaldSandwich,
    WaldModel,
    Delta,
    Bootstrap { resamples: usize, failures: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrEstimate {
    pub estimand: Estimand,
    pub log_rr: f64,
    pub se_log_rr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: IntervalMethod,
}

impl RrEstimate {
    pub fn rr(&self) -> f64 {
        self.log_rr.exp()
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Two-sided normal critical value for confidence `level`.
pub fn z_value(level: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    std.inverse_cdf(0.5 + level / 2.0)
}

fn wald(estimand: Estimand, log_rr: f64, se: f64, level: f64, method: IntervalMethod) -> RrEstimate {
    let z = z_value(level);
    RrEstimate {
        estimand,
        log_rr,
        se_log_rr: se,
        ci_low: (log_rr - z * se).exp(),
        ci_high: (log_rr + z * se).exp(),
        method,
    }
}

/// `exp(beta_j)` with a symmetric Wald interval on the log scale.
pub fn coefficient_rr<F: LogLinearFit + ?Sized>(fit: &F, j: usize, label: &str, level: f64) -> RrEstimate {
    let se = fit.covariance()[(j, j)].max(0.0).sqrt();
    wald(
        Estimand::Coefficient {
            column: label.to_string(),
        },
        fit.beta()[j],
        se,
        level,
        fit.interval_method(),
    )
}

/// One coefficient ratio per exposure main-effect or dummy column.
pub fn exposure_coefficient_rrs<F: LogLinearFit + ?Sized>(fit: &F, dm: &DesignMatrix, level: f64) -> Vec<RrEstimate> {
    dm.exposure_cols
        .iter()
        .filter(|&&j| !dm.labels[j].contains(':') && !dm.labels[j].starts_with("rcs("))
        .map(|&j| coefficient_rr(fit, j, &dm.labels[j], level))
        .collect()
}

/// Log of the standardized ratio and its gradient with respect to `beta`.
pub fn standardized_log_rr(beta: &DVector<f64>, x1: &DMatrix<f64>, x0: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let side = |x: &DMatrix<f64>| -> Result<(f64, DVector<f64>)> {
        let mu = (x * beta).map(f64::exp);
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFiniteStandardization);
        }
        let total = mu.sum();
        Ok((total, x.tr_mul(&mu) / total))
    };
    let (s1, g1) = side(x1)?;
    let (s0, g0) = side(x0)?;
    let log_rr = s1.ln() - s0.ln();
    if !log_rr.is_finite() {
        return Err(Error::NonFiniteStandardization);
    }
    Ok((log_rr, g1 - g0))
}

/// Counterfactual design matrices with the exposure set to `a1` and `a0`.
pub fn counterfactual_designs(
    design: &Design,
    data: &Dataset,
    a1: f64,
    a0: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let exposure = design
        .exposure()
        .ok_or_else(|| Error::InvalidTerm("design has no exposure column".into()))?;
    let (x1, _, _) = design.realize(&data.with_constant(exposure, a1)?)?;
    let (x0, _, _) = design.realize(&data.with_constant(exposure, a0)?)?;
    Ok((x1, x0))
}

/// Standardized ratio `sum exp(x_i(a1) b) / sum exp(x_i(a0) b)` over the
/// estimation sample, with a delta-method standard error.
pub fn marginal_rr<F: LogLinearFit + ?Sized>(
    fit: &F,
    design: &Design,
    data: &Dataset,
    a1: f64,
    a0: f64,
    level: f64,
) -> Result<RrEstimate> {
    let (x1, x0) = counterfactual_designs(design, data, a1, a0)?;
    let (log_rr, g) = standardized_log_rr(fit.beta(), &x1, &x0)?;
    let var = (g.transpose() * fit.covariance() * &g)[(0, 0)];
    if !var.is_finite() {
        return Err(Error::NonFiniteStandardization);
    }
    Ok(wald(
        Estimand::Marginal { a1, a0 },
        log_rr,
        var.max(0.0).sqrt(),
        level,
        IntervalMethod::Delta,
    ))
}

/// Percentile bootstrap of a log risk ratio. `estimate` maps a dataset to
/// the log ratio; resample `b` draws from stream `b` of `seed`, so the
/// result does not depend on scheduling.
pub fn bootstrap_rr<E>(
    estimate: E,
    estimand: Estimand,
    data: &Dataset,
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<RrEstimate>
where
    E: Fn(&Dataset) -> Result<f64> + Sync,
{
    if resamples < 100 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 100 resamples, got {resamples}"
        )));
    }
    let n = data.n();
    let draws: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b as u64);
            let rows: Vec<usize> = (0..n).map(|_| r.below(n)).collect();
            estimate(&data.select_rows(&rows)).ok().filter(|v| v.is_finite())
        })
        .collect();
    let mut ok: Vec<f64> = draws.iter().flatten().copied().collect();
    let failures = resamples - ok.len();
    if failures * 5 > resamples {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: resamples,
        });
    }
    let log_rr = estimate(data)?;
    let m = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / m;
    let se = (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    ok.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(RrEstimate {
        estimand,
        log_rr,
        se_log_rr: se,
        ci_low: quantile_sorted(&ok, alpha / 2.0).exp(),
        ci_high: quantile_sorted(&ok, 1.0 - alpha / 2.0).exp(),
        method: IntervalMethod::Bootstrap { resamples, failures },
    })
}
