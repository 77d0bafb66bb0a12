//! Restricted cubic spline basis in the truncated-power parameterization.
//!
//! For knots `t_1 < ... < t_k` the basis has `k - 1` columns: `x` itself and
//! `k - 2` cubic terms
//!
//! ```text
//! [(x - t_j)+^3 - (x - t_{k-1})+^3 (t_k - t_j)/(t_k - t_{k-1})
//!              + (x - t_k)+^3 (t_{k-1} - t_j)/(t_k - t_{k-1})] / (t_k - t_1)^2
//! ```
//!
//! which are linear beyond both boundary knots.

use crate::error::{Error, Result};

/// Default knot quantiles by knot count (3 to 7).
pub fn default_knot_quantiles(k: usize) -> Option<&'static [f64]> {
    match k {
        3 => Some(&[0.10, 0.50, 0.90]),
        4 => Some(&[0.05, 0.35, 0.65, 0.95]),
        5 => Some(&[0.05, 0.275, 0.50, 0.725, 0.95]),
        6 => Some(&[0.05, 0.23, 0.41, 0.59, 0.77, 0.95]),
        7 => Some(&[0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975]),
        _ => None,
    }
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) q`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Knots at the given quantiles of `x`, with duplicates collapsed.
pub fn knots_at_quantiles(column: &str, x: &[f64], quantiles: &[f64]) -> Result<Vec<f64>> {
    validate_quantiles(quantiles)?;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut knots: Vec<f64> = quantiles.iter().map(|&q| quantile_sorted(&sorted, q)).collect();
    knots.dedup();
    if knots.len() < 3 {
        return Err(Error::TooFewKnots {
            column: column.to_string(),
            distinct: knots.len(),
        });
    }
    Ok(knots)
}

pub(crate) fn validate_quantiles(q: &[f64]) -> Result<()> {
    if q.len() < 3 {
        return Err(Error::InvalidTerm(format!(
            "spline needs at least 3 knots, got {}",
            q.len()
        )));
    }
    if q.iter().any(|&v| !(v > 0.0 && v < 1.0)) || q.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidTerm(format!(
            "knot quantiles must be strictly increasing in (0,1), got {q:?}"
        )));
    }
    Ok(())
}

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 3 || knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::NonIncreasingKnots(knots.to_vec()));
    }
    Ok(())
}

#[inline]
fn pos3(v: f64) -> f64 {
    if v > 0.0 {
        v * v * v
    } else {
        0.0
    }
}

/// Evaluates the `k - 1` basis functions at a single point into `out`.
pub fn rcs_row(x: f64, knots: &[f64], out: &mut [f64]) {
    let k = knots.len();
    let (t_km1, t_k) = (knots[k - 2], knots[k - 1]);
    let scale = (t_k - knots[0]).powi(2);
    let span = t_k - t_km1;
    out[0] = x;
    for j in 0..k - 2 {
        let tj = knots[j];
        out[j + 1] = (pos3(x - tj) - pos3(x - t_km1) * (t_k - tj) / span + pos3(x - t_k) * (t_km1 - tj) / span) / scale;
    }
}

/// Basis matrix stored column-major: `columns[c][i]` is column `c` at `x[i]`.
pub fn rcs_basis(x: &[f64], knots: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_knots(knots)?;
    let ncol = knots.len() - 1;
    let mut cols = vec![Vec::with_capacity(x.len()); ncol];
    let mut row = vec![0.0; ncol];
    for &xi in x {
        rcs_row(xi, knots, &mut row);
        for (c, v) in cols.iter_mut().zip(&row) {
            c.push(*v);
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNOTS: [f64; 4] = [-1.2, -0.3, 0.4, 1.5];

    fn eval(x: f64) -> Vec<f64> {
        let mut out = vec![0.0; KNOTS.len() - 1];
        rcs_row(x, &KNOTS, &mut out);
        out
    }

    #[test]
    fn below_first_knot_is_linear_only() {
        for x in [-5.0, -1.2, -1.200_000_1] {
            let r = eval(x);
            assert_eq!(r[0], x);
            assert!(r[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn tails_have_zero_second_derivative() {
        let h = 1e-3;
        for x in [1.6, 2.5, 10.0, -3.0] {
            let (a, b, c) = (eval(x - h), eval(x), eval(x + h));
            for j in 1..3 {
                let d2 = (a[j] - 2.0 * b[j] + c[j]) / (h * h);
                assert!(d2.abs() < 1e-6, "x={x} col={j} d2={d2}");
            }
        }
    }

    #[test]
    fn value_at_last_knot_matches_closed_form() {
        let r = eval(KNOTS[3]);
        let scale = (KNOTS[3] - KNOTS[0]).powi(2);
        for j in 0..2 {
            let expect = ((KNOTS[3] - KNOTS[j]).powi(3)
                - (KNOTS[3] - KNOTS[2]).powi(3) * (KNOTS[3] - KNOTS[j]) / (KNOTS[3] - KNOTS[2]))
                / scale;
            assert!((r[j + 1] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(matches!(
            rcs_basis(&[0.0], &[0.0, 0.0, 1.0]),
            Err(Error::NonIncreasingKnots(_))
        ));
        assert!(rcs_basis(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert!((quantile_sorted(&s, 0.05) - 1.15).abs() < 1e-15);
    }

    #[test]
    fn discrete_column_collapses_knots() {
        let x: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        assert!(matches!(
            knots_at_quantiles("b", &x, &[0.05, 0.35, 0.65, 0.95]),
            Err(Error::TooFewKnots { distinct: 2, .. })
        ));
    }
}
