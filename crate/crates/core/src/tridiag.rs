//! Symmetric tridiagonal linear algebra: LDL^T (Thomas) solves, Sturm counts, bisection
//! eigenvalues and inverse-iteration eigenvectors.
//!
//! Matrices are passed as `diagonal` (length n) and `off_diagonal` (length n - 1).

use crate::error::{Error, Result};

/// Solves `A x = rhs` for symmetric tridiagonal, positive definite `A`.
///
/// Fails on the first non-positive pivot, which is how an indefinite system shows up.
pub fn solve_spd(diagonal: &[f64], off_diagonal: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diagonal.len();
    debug_assert_eq!(off_diagonal.len() + 1, n.max(1));
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut pivots = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diagonal[0];
    let mut carry = rhs[0];
    for i in 0..n {
        if i > 0 {
            let l = off_diagonal[i - 1] / pivots[i - 1];
            pivot = diagonal[i] - l * off_diagonal[i - 1];
            carry = rhs[i] - l * x[i - 1];
        }
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::SingularSystem { row: i, pivot });
        }
        pivots[i] = pivot;
        x[i] = carry;
    }
    x[n - 1] /= pivots[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (x[i] - off_diagonal[i] * x[i + 1]) / pivots[i];
    }
    Ok(x)
}

/// [`solve_spd`] by a twisted factorization: elimination runs from both ends toward row
/// `center`, which is solved last. For data that is mirror-symmetric about `center` every
/// operation on one side has an exact mirror on the other, so the solution is exactly
/// symmetric as well.
pub fn solve_spd_twisted(
    diagonal: &[f64],
    off_diagonal: &[f64],
    rhs: &[f64],
    center: usize,
) -> Result<Vec<f64>> {
    let n = diagonal.len();
    debug_assert_eq!(off_diagonal.len() + 1, n.max(1));
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return Ok(Vec::new());
    }
    assert!(
        center < n,
        "twist row {center} outside a system of size {n}"
    );
    let check = |row: usize, pivot: f64| {
        if pivot > 0.0 && pivot.is_finite() {
            Ok(pivot)
        } else {
            Err(Error::SingularSystem { row, pivot })
        }
    };
    let mut pivots = vec![0.0; n];
    let mut x = vec![0.0; n];
    for i in 0..center {
        let (mut p, mut y) = (diagonal[i], rhs[i]);
        if i > 0 {
            let l = off_diagonal[i - 1] / pivots[i - 1];
            p -= l * off_diagonal[i - 1];
            y -= l * x[i - 1];
        }
        pivots[i] = check(i, p)?;
        x[i] = y;
    }
    for i in (center + 1..n).rev() {
        let (mut p, mut y) = (diagonal[i], rhs[i]);
        if i + 1 < n {
            let l = off_diagonal[i] / pivots[i + 1];
            p -= l * off_diagonal[i];
            y -= l * x[i + 1];
        }
        pivots[i] = check(i, p)?;
        x[i] = y;
    }
    let (mut from_left, mut from_right) = ((0.0, 0.0), (0.0, 0.0));
    if center > 0 {
        let l = off_diagonal[center - 1] / pivots[center - 1];
        from_left = (l * off_diagonal[center - 1], l * x[center - 1]);
    }
    if center + 1 < n {
        let l = off_diagonal[center] / pivots[center + 1];
        from_right = (l * off_diagonal[center], l * x[center + 1]);
    }
    let p = check(center, diagonal[center] - (from_left.0 + from_right.0))?;
    x[center] = (rhs[center] - (from_left.1 + from_right.1)) / p;
    for i in (0..center).rev() {
        x[i] = (x[i] - off_diagonal[i] * x[i + 1]) / pivots[i];
    }
    for i in center + 1..n {
        x[i] = (x[i] - off_diagonal[i - 1] * x[i - 1]) / pivots[i];
    }
    Ok(x)
}

/// General tridiagonal solve without pivoting; used by inverse iteration where the shift makes
/// the matrix nearly singular on purpose.
fn solve_shifted(diagonal: &[f64], off_diagonal: &[f64], shift: f64, rhs: &mut [f64]) {
    let n = diagonal.len();
    let tiny = f64::EPSILON
        * diagonal
            .iter()
            .chain(off_diagonal)
            .fold(1.0f64, |m, v| m.max(v.abs()));
    let mut pivots = vec![0.0; n];
    for i in 0..n {
        let mut p = diagonal[i] - shift;
        if i > 0 {
            let l = off_diagonal[i - 1] / pivots[i - 1];
            p -= l * off_diagonal[i - 1];
            rhs[i] -= l * rhs[i - 1];
        }
        if p.abs() < tiny {
            p = if p < 0.0 { -tiny } else { tiny };
        }
        pivots[i] = p;
    }
    rhs[n - 1] /= pivots[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - off_diagonal[i] * rhs[i + 1]) / pivots[i];
    }
}

/// Number of eigenvalues strictly below `lambda`, from the signs of the pivots of
/// `A - lambda I = L D L^T`.
pub fn sturm_count(diagonal: &[f64], off_diagonal: &[f64], lambda: f64) -> usize {
    let n = diagonal.len();
    if n == 0 {
        return 0;
    }
    let guard = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = 0.0;
    for i in 0..n {
        q = if i == 0 {
            diagonal[0] - lambda
        } else {
            diagonal[i] - lambda - off_diagonal[i - 1] * off_diagonal[i - 1] / q
        };
        // a vanishing pivot is perturbed to a tiny negative one (and counted as such)
        if q.abs() < guard {
            q = -guard;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval containing the whole spectrum.
pub fn gershgorin_bounds(diagonal: &[f64], off_diagonal: &[f64]) -> (f64, f64) {
    let n = diagonal.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 {
            off_diagonal[i - 1].abs()
        } else {
            0.0
        };
        let right = if i + 1 < n {
            off_diagonal[i].abs()
        } else {
            0.0
        };
        lo = lo.min(diagonal[i] - left - right);
        hi = hi.max(diagonal[i] + left + right);
    }
    (lo, hi)
}

/// The `index`-th smallest eigenvalue (0-based) by bisection on the Sturm count, to absolute
/// accuracy `tol`.
pub fn kth_eigenvalue(diagonal: &[f64], off_diagonal: &[f64], index: usize, tol: f64) -> f64 {
    let (lo, hi) = gershgorin_bounds(diagonal, off_diagonal);
    let pad = 1e-12 * (hi - lo).abs().max(1.0);
    let (mut a, mut b) = (lo - pad, hi + pad);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if sturm_count(diagonal, off_diagonal, mid) > index {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// The `m` smallest eigenvalues in ascending order.
pub fn lowest_eigenvalues(diagonal: &[f64], off_diagonal: &[f64], m: usize, tol: f64) -> Vec<f64> {
    let m = m.min(diagonal.len());
    (0..m)
        .map(|i| kth_eigenvalue(diagonal, off_diagonal, i, tol))
        .collect()
}

/// Unit eigenvector for an (accurately known) eigenvalue, by inverse iteration.
pub fn eigenvector(diagonal: &[f64], off_diagonal: &[f64], eigenvalue: f64) -> Vec<f64> {
    let n = diagonal.len();
    let scale = diagonal
        .iter()
        .chain(off_diagonal)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let shift = eigenvalue - 1e-10 * scale;
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    for _ in 0..4 {
        solve_shifted(diagonal, off_diagonal, shift, &mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// `A x` for a symmetric tridiagonal `A`.
pub fn apply(diagonal: &[f64], off_diagonal: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diagonal.len();
    (0..n)
        .map(|i| {
            let mut y = diagonal[i] * x[i];
            if i > 0 {
                y += off_diagonal[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                y += off_diagonal[i] * x[i + 1];
            }
            y
        })
        .collect()
}
