#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use riskratio::cli::csvio::read_dataset;
use riskratio::Dataset;

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn eight_rows() -> Dataset {
    read_dataset(&data_path("eight_rows.csv"), "y").unwrap()
}

pub fn two_by_two() -> Dataset {
    read_dataset(&data_path("two_by_two.csv"), "y").unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// Central differences of a vector function, column j for parameter j.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, b: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = f(b).len();
    let mut out = DMatrix::zeros(m, b.len());
    for j in 0..b.len() {
        let step = h * (1.0 + b[j].abs());
        let mut up = b.clone();
        let mut dn = b.clone();
        up[j] += step;
        dn[j] -= step;
        out.set_column(j, &((f(&up) - f(&dn)) / (2.0 * step)));
    }
    out
}

/// Small random log-linear instance: intercept plus `p - 1` standard normal
/// columns, outcomes drawn with probabilities `min(exp(eta), 1)`.
pub fn random_instance(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>, DVector<f64>) {
    let mut r = riskratio::rng::stream(seed, 0);
    let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { 0.5 * r.normal() });
    let beta = DVector::from_fn(p, |j, _| if j == 0 { -1.5 } else { 0.3 * r.normal() });
    let eta = &x * &beta;
    let y = eta.iter().map(|e| r.bernoulli(e.exp().min(1.0)) as u8 as f64).collect();
    (x, y, beta)
}
