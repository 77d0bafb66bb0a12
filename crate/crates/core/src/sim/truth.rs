//! Monte Carlo truth of the marginal risk ratio via counterfactual outcomes.

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::sim::scenario::Scenario;

/// Stream id reserved for truth computations.
pub const TRUTH_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub rr_true: f64,
    pub mcse: f64,
    pub n: usize,
    pub seed: u64,
}

/// Draws `n` covariate vectors and, for each, independent counterfactual
/// outcomes `Y^1` and `Y^0`; returns `mean(Y^1) / mean(Y^0)` with a
/// delta-method Monte Carlo standard error.
pub fn monte_carlo_truth(scenario: Scenario, n: usize, seed: u64) -> Truth {
    let mut r = rng::stream(seed, TRUTH_STREAM);
    let (mut s1, mut s0, mut s10) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let (l1, l2) = scenario.draw_covariates(&mut r);
        let y1 = r.bernoulli(scenario.outcome_prob(1.0, l1, l2)) as u8 as f64;
        let y0 = r.bernoulli(scenario.outcome_prob(0.0, l1, l2)) as u8 as f64;
        s1 += y1;
        s0 += y0;
        s10 += y1 * y0;
    }
    let nf = n as f64;
    let (m1, m0) = (s1 / nf, s0 / nf);
    let rr_true = m1 / m0;
    // Binary outcomes: var = m(1 - m); cov = E[Y1 Y0] - m1 m0.
    let v1 = m1 * (1.0 - m1);
    let v0 = m0 * (1.0 - m0);
    let c10 = s10 / nf - m1 * m0;
    let var_log = (v1 / (m1 * m1) + v0 / (m0 * m0) - 2.0 * c10 / (m1 * m0)) / nf;
    Truth {
        rr_true,
        mcse: rr_true * var_log.max(0.0).sqrt(),
        n,
        seed,
    }
}
