//! Consistency demonstration: robust Poisson risk ratios over increasing
//! sample sizes under a log-linear data-generating process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_design_matrix, parse_terms};
use crate::ee::fit_robust_poisson;
use crate::error::{Error, Result};
use crate::inference::coefficient_rr;
use crate::rng;
use crate::sim::scenario::Scenario;
use crate::sim::study::derive_seed;

pub const DEFAULT_SIZES: [usize; 8] = [10, 25, 50, 100, 250, 500, 1000, 2000];

/// One replication's estimate at sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigurePoint {
    pub n: usize,
    pub replication: usize,
    pub rr_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Averages over the converged replications at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub n: usize,
    pub rr_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_abs_error: f64,
    pub mean_ci_width: f64,
    pub converged: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDemo {
    pub truth: f64,
    pub rows: Vec<FigureRow>,
    pub points: Vec<FigurePoint>,
}

fn one_fit(n: usize, seed: u64, replication: usize) -> Option<FigurePoint> {
    let mut r = rng::stream(derive_seed(seed, n as u64), replication as u64);
    let data = Scenario::FigureDemo.generate_with(n, &mut r);
    let terms = parse_terms("1 + A + L1").expect("static formula");
    let dm = build_design_matrix(&data, &terms, Some("A")).ok()?;
    let fit = fit_robust_poisson(&dm.x, data.y()).ok()?;
    let e = coefficient_rr(&fit, 1, "A", 0.95);
    (e.se_log_rr.is_finite() && e.se_log_rr > 0.0).then_some(FigurePoint {
        n,
        replication,
        rr_hat: e.rr(),
        ci_low: e.ci_low,
        ci_high: e.ci_high,
    })
}

/// Fits `replications` datasets at each size in `sizes` (ascending, no
/// duplicates). Sizes where no replication converged produce no row.
pub fn consistency_demo(sizes: &[usize], replications: usize, seed: u64) -> Result<ConsistencyDemo> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::Config("sizes must be positive and strictly ascending".into()));
    }
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let truth = Scenario::FigureDemo.exact_rr().expect("closed form");
    let units: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..replications).map(move |r| (n, r)))
        .collect();
    let points: Vec<FigurePoint> = units
        .into_par_iter()
        .map(|(n, r)| one_fit(n, seed, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let rows = sizes
        .iter()
        .filter_map(|&n| {
            let pts: Vec<&FigurePoint> = points.iter().filter(|p| p.n == n).collect();
            if pts.is_empty() {
                return None;
            }
            let m = pts.len() as f64;
            let avg = |f: &dyn Fn(&FigurePoint) -> f64| pts.iter().map(|p| f(p)).sum::<f64>() / m;
            Some(FigureRow {
                n,
                rr_hat: avg(&|p| p.rr_hat),
                ci_low: avg(&|p| p.ci_low),
                ci_high: avg(&|p| p.ci_high),
                mean_abs_error: avg(&|p| (p.rr_hat - truth).abs()),
                mean_ci_width: avg(&|p| p.ci_high - p.ci_low),
                converged: pts.len(),
                replications,
            })
        })
        .collect();
    Ok(ConsistencyDemo { truth, rows, points })
}
