//! Small dense solves used by the Newton iterations.

use nalgebra::{DMatrix, DVector};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Solution of a linear system together with a cheap condition estimate.
#[derive(Debug, Clone)]
pub struct Solved {
    pub x: DVector<f64>,
    pub condition: f64,
}

/// Solves `a x = b` for symmetric positive definite `a`, falling back to a
/// fully pivoted LU when Cholesky fails. The condition estimate is the
/// squared ratio of extreme Cholesky diagonals (or the ratio of extreme
/// `|U_ii|` on the LU path). Returns `None` when the system is singular.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<Solved> {
    if let Some(ch) = a.clone().cholesky() {
        let d = ch.l_dirty().diagonal();
        let condition = diag_ratio(d.iter().copied()).powi(2);
        return Some(Solved {
            x: ch.solve(b),
            condition,
        });
    }
    solve_general(a, b)
}

/// Solves a general square system with full pivoting.
pub fn solve_general(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<Solved> {
    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let condition = diag_ratio(u.diagonal().iter().copied());
    if !condition.is_finite() {
        return None;
    }
    lu.solve(b).map(|x| Solved { x, condition })
}

fn diag_ratio(d: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in d {
        let v = v.abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a general square matrix, `None` when numerically singular.
pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let lu = a.clone().full_piv_lu();
    if !diag_ratio(lu.u().diagonal().iter().copied()).is_finite() {
        return None;
    }
    lu.try_inverse()
}

/// `(a + a^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_and_fallback() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let s = solve_spd(&a, &b).unwrap();
        assert!((&a * &s.x - &b).norm() < 1e-14);
        // indefinite goes through LU
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = solve_spd(&a, &b).unwrap();
        assert!((&a * &s.x - &b).norm() < 1e-14);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(solve_spd(&sing, &b).is_none() || solve_spd(&sing, &b).unwrap().condition > MAX_CONDITION);
        assert!(inverse(&DMatrix::zeros(2, 2)).is_none());
    }
}
