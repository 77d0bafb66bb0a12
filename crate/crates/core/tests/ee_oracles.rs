mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use riskratio::design::{build_design_matrix, parse_terms};
use riskratio::sim::{generate, Scenario};
use riskratio::{
    bootstrap_rr, ee_jacobian, ee_score, fit_poisson_irls, fit_robust_poisson, poisson_loglik, sandwich_covariance,
    sandwich_liang_zeger, Estimand, NewtonOptions,
};

/// Profile score in the slope: the intercept equation has the closed form
/// `exp(b0) = sum y / sum exp(b1 x)`.
fn profile_score(x: &[f64], y: &[f64], b1: f64) -> (f64, f64) {
    let sy: f64 = y.iter().sum();
    let b0 = (sy / x.iter().map(|v| (b1 * v).exp()).sum::<f64>()).ln();
    let s = x.iter().zip(y).map(|(v, yi)| v * (yi - (b0 + b1 * v).exp())).sum();
    (b0, s)
}

#[test]
fn eight_rows_match_grid_and_bisection() {
    let data = eight_rows();
    let l = data.column("L").unwrap().to_vec();
    let y = data.y().to_vec();

    // Grid scan for a sign change of the profile score, then bisection.
    let grid: Vec<f64> = (0..=4000).map(|i| -10.0 + i as f64 * 0.005).collect();
    let (mut lo, mut hi) = grid
        .windows(2)
        .find(|w| profile_score(&l, &y, w[0]).1 * profile_score(&l, &y, w[1]).1 <= 0.0)
        .map(|w| (w[0], w[1]))
        .expect("sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profile_score(&l, &y, lo).1 * profile_score(&l, &y, mid).1 <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b1 = 0.5 * (lo + hi);
    let b0 = profile_score(&l, &y, b1).0;

    let dm = build_design_matrix(&data, &parse_terms("1 + L").unwrap(), None).unwrap();
    let fit = fit_robust_poisson(&dm.x, data.y()).unwrap();
    assert!((fit.beta[0] - b0).abs() < 1e-6, "{} vs {b0}", fit.beta[0]);
    assert!((fit.beta[1] - b1).abs() < 1e-6, "{} vs {b1}", fit.beta[1]);
}

#[test]
fn two_by_two_closed_forms() {
    let data = two_by_two();
    let dm = build_design_matrix(&data, &parse_terms("1 + A").unwrap(), Some("A")).unwrap();
    let fit = fit_robust_poisson(&dm.x, data.y()).unwrap();
    assert!((fit.beta[1] - 1.5f64.ln()).abs() < 1e-8);
    let se = ((1.0f64 - 0.3) / (100.0 * 0.3) + (1.0 - 0.2) / (100.0 * 0.2)).sqrt();
    assert!((fit.se(1) - se).abs() < 1e-8, "{} vs {se}", fit.se(1));
}

#[test]
fn intercept_only_sandwich_variance() {
    let y: Vec<f64> = (0..100).map(|i| (i % 4 == 0) as u8 as f64).collect();
    let x = DMatrix::from_element(100, 1, 1.0);
    let fit = fit_robust_poisson(&x, &y).unwrap();
    let ybar = 0.25;
    let expected = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / (100.0 * ybar).powi(2);
    assert!((fit.cov_sandwich[(0, 0)] - expected).abs() < 1e-12);
    assert!((fit.beta[0] - ybar.ln()).abs() < 1e-12);
}

#[test]
fn sandwich_assemblies_agree() {
    for seed in 0..100 {
        let (x, y, _) = random_instance(seed, 60, 3);
        let Ok(fit) = fit_robust_poisson(&x, &y) else { continue };
        let a = sandwich_covariance(&x, &y, &fit.beta).unwrap();
        let b = sandwich_liang_zeger(&x, &y, &fit.beta).unwrap();
        let scale = 1.0 + a.abs().max();
        assert!((a - b).abs().max() < 1e-10 * scale, "seed {seed}");
    }
}

#[test]
fn newton_and_irls_agree() {
    for seed in 0..50 {
        let (x, y, _) = random_instance(1000 + seed, 200, 4);
        let fit = fit_robust_poisson(&x, &y).unwrap();
        let irls = fit_poisson_irls(&x, &y, &NewtonOptions::default()).unwrap();
        assert!((&fit.beta - irls).abs().max() < 1e-8, "seed {seed}");
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    for seed in 0..100 {
        let (x, y, beta) = random_instance(2000 + seed, 40, 3);
        let analytic = ee_jacobian(&x, &y, &beta).unwrap();
        let numeric = fd_jacobian(|b| ee_score(&x, &y, b).unwrap(), &beta, 1e-5);
        let scale = analytic.abs().max();
        assert!((analytic - numeric).abs().max() < 1e-6 * scale, "seed {seed}");
    }
}

#[test]
fn loglik_gradient_is_the_score() {
    for seed in 0..20 {
        let (x, y, beta) = random_instance(3000 + seed, 30, 3);
        let f = |b: &DVector<f64>| DVector::from_element(1, poisson_loglik(&x, &y, b).unwrap());
        let numeric = fd_jacobian(f, &beta, 1e-5).transpose();
        let score = ee_score(&x, &y, &beta).unwrap();
        for j in 0..3 {
            assert!(rel_err(numeric[j], score[j]) < 1e-6, "seed {seed}");
        }
    }
    let (x, y, _) = random_instance(7, 80, 3);
    let fit = fit_robust_poisson(&x, &y).unwrap();
    let score = ee_score(&x, &y, &fit.beta).unwrap();
    assert!(score.abs().max() < 1e-8 * 80.0);
    let sum_mu: f64 = fit.mu_hat.iter().sum();
    assert!((sum_mu - y.iter().sum::<f64>()).abs() < 1e-8 * 80.0);
}

#[test]
fn estimating_function_is_unbiased_at_truth() {
    let (x, y, beta) = random_instance(99, 10_000, 3);
    assert!((&x * &beta).max() < 0.0);
    let n = y.len() as f64;
    let mu = (&x * &beta).map(f64::exp);
    for j in 0..3 {
        let terms: Vec<f64> = (0..y.len()).map(|i| x[(i, j)] * (y[i] - mu[i])).collect();
        let mean = terms.iter().sum::<f64>() / n;
        let sd = (terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 4.0 * sd / n.sqrt(), "component {j}: {mean}");
    }
}

#[test]
fn sandwich_se_matches_bootstrap_sd() {
    let data = generate(Scenario::Simple, 2000, 11).unwrap();
    let terms = parse_terms("1 + A + L1 + L2").unwrap();
    let dm = build_design_matrix(&data, &terms, Some("A")).unwrap();
    let fit = fit_robust_poisson(&dm.x, data.y()).unwrap();
    let est = |d: &riskratio::Dataset| -> riskratio::Result<f64> {
        let m = build_design_matrix(d, &terms, Some("A"))?;
        Ok(fit_robust_poisson(&m.x, d.y())?.beta[1])
    };
    let boot = bootstrap_rr(est, Estimand::Coefficient { column: "A".into() }, &data, 500, 3, 0.95).unwrap();
    let ratio = boot.se_log_rr / fit.se(1);
    assert!((ratio - 1.0).abs() < 0.10, "bootstrap/sandwich = {ratio}");
}
