//! The linearized operator `T = -d^2/dx^2 + k - (6 - 5u^2) u^2 - eps delta` about a bound state,
//! its lowest eigenvalues, the Morse index, the kernel at the fold and the stability verdict.
//!
//! The operator is discretized on the interior nodes of a [`Grid`] with homogeneous Dirichlet
//! ends. The delta is lumped: `-eps/h` on the diagonal entry of the origin node, which keeps the
//! matrix symmetric tridiagonal so that Sturm counts apply.

use serde::{Deserialize, Serialize};

use crate::bifurcation::{mass_sq_slope, slope_limit_at_three_quarters};
use crate::closed_form::{
    fold_point, Branch, ClosedFormProfile, CouplingStrength, Side, SolitonSpec,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::quadrature::{integrate_exponential_tail, uniform_breakpoints};
use crate::tridiag;

/// Absolute accuracy of computed eigenvalues.
pub const EIGENVALUE_TOL: f64 = 1e-10;
/// Largest number of eigenvalues [`lowest_eigenvalues`] hands out.
pub const MAX_EIGENVALUES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator {
    pub grid: Grid,
    /// Diagonal over interior nodes `1..J`.
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
    pub epsilon: f64,
    pub k: f64,
    /// Bound state the operator was built around (`None` for a profile override).
    pub spec: Option<SolitonSpec>,
}

impl LinearizedOperator {
    /// Matrix dimension (`J - 1`).
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Position of the origin node within the interior vector.
    pub fn origin_row(&self) -> usize {
        self.grid.origin() - 1
    }

    /// Zero-threshold for the negative/zero classification, `10 h^2`.
    pub fn tol_zero(&self) -> f64 {
        10.0 * self.grid.h() * self.grid.h()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        tridiag::apply(&self.diagonal, &self.off_diagonal, x)
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        tridiag::sturm_count(&self.diagonal, &self.off_diagonal, lambda)
    }

    /// Unit eigenvector for an eigenvalue of this operator, extended by the Dirichlet zeros to
    /// the full grid and sign-fixed so that its largest entry is positive.
    pub fn eigenvector(&self, eigenvalue: f64) -> GridFunction {
        let v = tridiag::eigenvector(&self.diagonal, &self.off_diagonal, eigenvalue);
        let peak = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if peak < 0.0 { -1.0 } else { 1.0 };
        let mut full = Vec::with_capacity(self.grid.len());
        full.push(0.0);
        full.extend(v.iter().map(|x| sign * x));
        full.push(0.0);
        GridFunction::from_parts_unchecked(self.grid, full)
    }
}

/// Builds the operator for `profile` sampled on the grid, with coupling `epsilon` and
/// propagation constant `k`; `profile = None` means `u = 0`.
pub fn assemble_with_profile(
    grid: &Grid,
    epsilon: f64,
    k: f64,
    profile: Option<&GridFunction>,
) -> Result<LinearizedOperator> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::out_of_range("epsilon", "[0, inf)", epsilon));
    }
    if !k.is_finite() {
        return Err(Error::out_of_range("k", "finite", k));
    }
    if let Some(u) = profile {
        if u.grid() != grid {
            return Err(Error::InvalidArgument(
                "profile lives on a different grid".into(),
            ));
        }
    }
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let j0 = grid.origin();
    let diagonal = (1..grid.intervals())
        .map(|j| {
            let u2 = profile.map_or(0.0, |u| u.values()[j].powi(2));
            let mut d = 2.0 * inv_h2 + k - (6.0 - 5.0 * u2) * u2;
            if j == j0 {
                d -= epsilon / h;
            }
            d
        })
        .collect::<Vec<_>>();
    let off_diagonal = vec![-inv_h2; diagonal.len().saturating_sub(1)];
    Ok(LinearizedOperator {
        grid: *grid,
        diagonal,
        off_diagonal,
        epsilon,
        k,
        spec: None,
    })
}

/// The operator about the exact bound state `spec`.
pub fn assemble_operator(spec: &SolitonSpec, grid: &Grid) -> Result<LinearizedOperator> {
    let p = ClosedFormProfile::new(*spec)?;
    let u = GridFunction::from_fn(*grid, |x| p.value(x))?;
    let mut op = assemble_with_profile(grid, spec.epsilon().value(), spec.k(), Some(&u))?;
    op.spec = Some(*spec);
    Ok(op)
}

/// The `m` (at most [`MAX_EIGENVALUES`]) smallest eigenvalues in ascending order.
pub fn lowest_eigenvalues(op: &LinearizedOperator, m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > MAX_EIGENVALUES {
        return Err(Error::out_of_range("m", "1..=10", m as f64));
    }
    Ok(tridiag::lowest_eigenvalues(
        &op.diagonal,
        &op.off_diagonal,
        m,
        EIGENVALUE_TOL,
    ))
}

/// Number of eigenvalues below `-10 h^2`.
pub fn morse_index_of(op: &LinearizedOperator) -> usize {
    op.count_below(-op.tol_zero())
}

pub fn morse_index(spec: &SolitonSpec, grid: &Grid) -> Result<usize> {
    Ok(morse_index_of(&assemble_operator(spec, grid)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub morse_index: usize,
    /// Distance from zero of the eigenvalue closest to it.
    pub zero_mode_gap: f64,
    /// Cosine between the lowest eigenvector and `|u'|` (fold only).
    pub kernel_overlap: Option<f64>,
}

pub fn spectrum_report(op: &LinearizedOperator, m: usize) -> Result<SpectrumReport> {
    let eigenvalues = lowest_eigenvalues(op, m)?;
    let zero_mode_gap = eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(f64::INFINITY, f64::min);
    Ok(SpectrumReport {
        morse_index: morse_index_of(op),
        zero_mode_gap,
        eigenvalues,
        kernel_overlap: None,
    })
}

/// `|u'|` sampled on the grid, with the common one-sided value at the origin.
fn abs_derivative(p: &ClosedFormProfile, grid: &Grid) -> Result<GridFunction> {
    let values = grid
        .nodes()
        .map(|x| {
            if x == 0.0 {
                p.derivative_at_origin(Side::Right).map(f64::abs)
            } else {
                p.derivative(x).map(f64::abs)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(*grid, values)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Spectrum at the fold, where the linearization has a one-dimensional kernel spanned by
/// `|u'|`. Reports the three lowest eigenvalues and the overlap of the lowest eigenvector
/// with the sampled `|u'|`.
pub fn fold_kernel_check(epsilon: CouplingStrength, grid: &Grid) -> Result<SpectrumReport> {
    let spec = SolitonSpec::fold(epsilon);
    let op = assemble_operator(&spec, grid)?;
    let mut report = spectrum_report(&op, 3)?;
    let v = op.eigenvector(report.eigenvalues[0]);
    let eta = abs_derivative(&ClosedFormProfile::new(spec)?, grid)?;
    report.kernel_overlap = Some(cosine(v.values(), eta.values()));
    Ok(report)
}

/// Quadrature error target for [`f_integral`].
pub const F_INTEGRAL_TOL: f64 = 1e-12;

/// `f(eps) = 2 int_0^inf (5u^2 - 3) u |u'|^3 dx` at the fold profile. Its sign decides on which
/// side of zero the principal eigenvalue leaves the fold.
pub fn f_integral(epsilon: CouplingStrength) -> Result<f64> {
    f_integral_with(epsilon, 64, F_INTEGRAL_TOL)
}

/// [`f_integral`] with an explicit number of initial panels on `[0, 40/sqrt(k_bar)]` and error
/// target; used for convergence checks.
pub fn f_integral_with(epsilon: CouplingStrength, panels: usize, tol: f64) -> Result<f64> {
    let spec = SolitonSpec::fold(epsilon);
    let p = ClosedFormProfile::new(spec)?;
    let rate = p.decay_rate;
    let integrand = |x: f64| {
        let u2 = p.value_sq(x);
        let du = if x == 0.0 {
            p.derivative_at_origin(Side::Right)
        } else {
            p.derivative(x)
        }
        .unwrap_or(0.0)
        .abs();
        (5.0 * u2 - 3.0) * u2.sqrt() * du * du * du
    };
    let q = integrate_exponential_tail(
        integrand,
        &uniform_breakpoints(0.0, 40.0 / rate, panels),
        4.0 * rate,
        0.5 * tol,
        0.5 * tol,
    )?;
    Ok(2.0 * q.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityMechanism {
    /// No negative eigenvalue.
    PositiveSpectrum,
    /// One negative eigenvalue and `d||u||^2/dk > 0`.
    VKSlope,
    /// The fold, stable as a limit of stable neighbouring orbits.
    FoldNeighborhood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub mechanism: Option<StabilityMechanism>,
    pub morse_index: usize,
    /// `d||u||^2/dk` (the one-sided limit at `k = 3/4`; `None` at the fold).
    pub slope: Option<f64>,
    /// Kernel evidence, attached at the fold.
    pub kernel: Option<SpectrumReport>,
}

pub fn classify_stability(spec: &SolitonSpec, grid: &Grid) -> Result<StabilityVerdict> {
    if spec.is_fold() {
        let kernel = fold_kernel_check(spec.epsilon(), grid)?;
        return Ok(StabilityVerdict {
            stable: true,
            mechanism: Some(StabilityMechanism::FoldNeighborhood),
            morse_index: kernel.morse_index,
            slope: None,
            kernel: Some(kernel),
        });
    }
    let n = morse_index(spec, grid)?;
    let slope = match spec.branch() {
        Branch::Front => slope_limit_at_three_quarters(spec.epsilon()),
        _ => mass_sq_slope(spec)?,
    };
    let mechanism = match n {
        0 => Some(StabilityMechanism::PositiveSpectrum),
        1 if slope > 0.0 => Some(StabilityMechanism::VKSlope),
        _ => None,
    };
    Ok(StabilityVerdict {
        stable: mechanism.is_some(),
        mechanism,
        morse_index: n,
        slope: Some(slope),
        kernel: None,
    })
}

/// Convenience: operator for `(eps, k, branch)` with the usual mapping of singular points.
pub fn operator_at(
    epsilon: CouplingStrength,
    k: f64,
    branch: Branch,
    grid: &Grid,
) -> Result<LinearizedOperator> {
    let spec = crate::bifurcation::curve_point(epsilon, k, branch)?;
    assemble_operator(&spec, grid)
}

/// Fold point re-exported for callers that only deal with spectra.
pub fn fold_k(epsilon: CouplingStrength) -> f64 {
    fold_point(epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn eps(s: f64) -> CouplingStrength {
        CouplingStrength::from_sqrt3_fraction(s).unwrap()
    }

    #[test]
    fn zero_profile_free_laplacian() {
        let g = Grid::new(-10.0, 10.0, 400).unwrap();
        let k = 0.6;
        let op = assemble_with_profile(&g, 0.0, k, None).unwrap();
        let h = g.h();
        let exact = k + 4.0 / (h * h) * (PI * h / (2.0 * g.length())).sin().powi(2);
        let ev = lowest_eigenvalues(&op, 1).unwrap();
        assert!((ev[0] - exact).abs() < 1e-10, "{} vs {exact}", ev[0]);
        assert_eq!(morse_index_of(&op), 0);
    }

    #[test]
    fn delta_well_bound_state() {
        let g = Grid::benchmark();
        for (e, k) in [(0.5, 0.3), (1.2, 0.8)] {
            let op = assemble_with_profile(&g, e, k, None).unwrap();
            let ev = lowest_eigenvalues(&op, 1).unwrap();
            assert!((ev[0] - (k - e * e / 4.0)).abs() < 5e-3);
            assert_eq!(morse_index_of(&op), 0);
        }
    }

    #[test]
    fn operator_is_symmetric_tridiagonal() {
        let g = Grid::benchmark();
        let spec = SolitonSpec::new(eps(0.5), 0.5, Branch::Lower).unwrap();
        let op = assemble_operator(&spec, &g).unwrap();
        assert_eq!(op.dim(), g.intervals() - 1);
        let inv_h2 = 1.0 / (g.h() * g.h());
        assert!(op.off_diagonal.iter().all(|&e| e == -inv_h2));
        // the origin row carries the delta, mirror rows agree exactly
        let r = op.origin_row();
        for m in 1..r {
            assert_eq!(op.diagonal[r + m], op.diagonal[r - m]);
        }
    }

    #[test]
    fn morse_examples() {
        let g = Grid::benchmark();
        let lower = SolitonSpec::new(eps(0.5), 0.5, Branch::Lower).unwrap();
        let upper = SolitonSpec::new(eps(0.5), 0.9, Branch::Upper).unwrap();
        assert_eq!(morse_index(&lower, &g).unwrap(), 1);
        assert_eq!(morse_index(&upper, &g).unwrap(), 0);
    }

    #[test]
    fn principal_eigenvalue_changes_sign_at_fold() {
        let g = Grid::benchmark();
        let e = eps(0.5);
        let k = fold_point(e) - 0.05;
        for (b, negative) in [(Branch::Lower, true), (Branch::Upper, false)] {
            let op = assemble_operator(&SolitonSpec::new(e, k, b).unwrap(), &g).unwrap();
            let l0 = lowest_eigenvalues(&op, 1).unwrap()[0];
            assert_eq!(l0 < 0.0, negative, "{b}: {l0}");
        }
    }

    #[test]
    fn fold_kernel() {
        let g = Grid::benchmark();
        let r = fold_kernel_check(eps(0.5), &g).unwrap();
        assert!(r.zero_mode_gap < 1e-2);
        assert!(r.kernel_overlap.unwrap() > 0.999);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn f_integral_positive_and_converged() {
        for s in [0.1, 0.5, 0.9] {
            let f = f_integral(eps(s)).unwrap();
            let coarse = f_integral_with(eps(s), 16, 1e-13).unwrap();
            assert!(f > 0.0);
            assert!((f - coarse).abs() < 1e-10);
        }
    }

    #[test]
    fn stability_examples() {
        let g = Grid::benchmark();
        let e = eps(0.5);
        let cases = [
            (
                SolitonSpec::new(e, 0.5, Branch::Lower).unwrap(),
                StabilityMechanism::VKSlope,
            ),
            (
                SolitonSpec::new(e, 0.9, Branch::Upper).unwrap(),
                StabilityMechanism::PositiveSpectrum,
            ),
            (SolitonSpec::front(e), StabilityMechanism::VKSlope),
            (SolitonSpec::fold(e), StabilityMechanism::FoldNeighborhood),
        ];
        for (spec, mech) in cases {
            let v = classify_stability(&spec, &g).unwrap();
            assert!(v.stable);
            assert_eq!(v.mechanism, Some(mech));
        }
    }

    #[test]
    fn eigenvalue_count_limits() {
        let g = Grid::new(-5.0, 5.0, 100).unwrap();
        let op = assemble_with_profile(&g, 0.0, 1.0, None).unwrap();
        assert!(lowest_eigenvalues(&op, 0).is_err());
        assert!(lowest_eigenvalues(&op, 11).is_err());
    }
}
