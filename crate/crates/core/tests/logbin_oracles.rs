mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use riskratio::design::{build_design_matrix, parse_terms};
use riskratio::sim::{generate, Scenario};
use riskratio::{fit_logbin_barrier, fit_logbin_ml, fit_robust_poisson, logbin_gradient, logbin_hessian, Error};

#[test]
fn barrier_agrees_with_ml_on_simple_scenario() {
    let terms = parse_terms("1 + A + L1 + L2").unwrap();
    let mut compared = 0;
    for seed in 0..50 {
        let data = generate(Scenario::Simple, 1000, 500 + seed).unwrap();
        let dm = build_design_matrix(&data, &terms, Some("A")).unwrap();
        let ml = fit_logbin_ml(&dm.x, data.y()).unwrap();
        let ab = fit_logbin_barrier(&dm.x, data.y()).unwrap();
        if ml.on_boundary || ab.on_boundary {
            continue;
        }
        compared += 1;
        assert!((&ml.beta - &ab.beta).abs().max() < 1e-4, "seed {seed}");
        assert!((ml.loglik - ab.loglik).abs() < 1e-6, "seed {seed}");
    }
    assert!(compared >= 45, "only {compared} interior fits");
}

#[test]
fn saturated_design_matches_robust_poisson() {
    let data = generate(Scenario::Simple, 1000, 3).unwrap();
    let dm = build_design_matrix(&data, &parse_terms("1 + A + L1 + A:L1").unwrap(), Some("A")).unwrap();
    let rp = fit_robust_poisson(&dm.x, data.y()).unwrap();
    let ml = fit_logbin_ml(&dm.x, data.y()).unwrap();
    assert!((&rp.beta - &ml.beta).abs().max() < 1e-8);

    let two = two_by_two();
    let dm = build_design_matrix(&two, &parse_terms("1 + A").unwrap(), Some("A")).unwrap();
    let ml = fit_logbin_ml(&dm.x, two.y()).unwrap();
    assert!((ml.beta[1] - 1.5f64.ln()).abs() < 1e-8);
}

#[test]
fn barrier_intercept_only_recovers_log_mean() {
    let y: Vec<f64> = (0..90).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let x = DMatrix::from_element(90, 1, 1.0);
    let fit = fit_logbin_barrier(&x, &y).unwrap();
    assert!((fit.beta[0] - (1.0f64 / 3.0).ln()).abs() < 1e-6);
}

#[test]
fn infeasible_unconstrained_optimum_lands_on_boundary() {
    // Risk rising steeply with x and saturating at the top of its range.
    let n = 200;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let y: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, &v)| (v > 0.75 || (v > 0.3 && i % 3 == 0) || i % 11 == 0) as u8 as f64)
        .collect();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let rp = fit_robust_poisson(&x, &y).unwrap();
    assert!(rp.n_mu_gt1 > 0, "construction requires fitted means above 1");

    let fit = fit_logbin_barrier(&x, &y).unwrap();
    assert!(fit.on_boundary);
    assert!((&x * &fit.beta).iter().all(|&e| e <= 1e-10));
    match fit_logbin_ml(&x, &y) {
        Ok(ml) => assert!(ml.on_boundary),
        Err(e) => assert!(matches!(e, Error::NonConvergence { .. })),
    }
}

#[test]
fn hessian_matches_finite_differences() {
    for seed in 0..30 {
        let (x, y, beta) = random_instance(4000 + seed, 50, 3);
        // Shift into the interior so every probability is below one.
        let mut b = beta.clone();
        b[0] -= (&x * &beta).max().max(0.0) + 0.2;
        let h = logbin_hessian(&x, &y, &b).unwrap();
        let numeric = fd_jacobian(|v: &DVector<f64>| logbin_gradient(&x, &y, v).unwrap(), &b, 1e-5);
        let scale = h.abs().max();
        assert!((h - numeric).abs().max() < 1e-5 * scale, "seed {seed}");
    }
}

#[test]
fn ml_fails_on_complex_scenario_sample() {
    let data = generate(Scenario::Complex, 1000, 1).unwrap();
    let dm = build_design_matrix(&data, &parse_terms("1 + A + L1 + L2").unwrap(), Some("A")).unwrap();
    let r = fit_logbin_ml(&dm.x, data.y());
    assert!(matches!(r, Err(Error::NonConvergence { .. })), "{r:?}");
}
