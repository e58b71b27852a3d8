//! Masses `||u||_{L^2}`, their exact `k`-derivatives and the full solution curve
//! `lower branch -> fold -> upper branch`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{
    fold_point, Branch, ClosedFormProfile, CouplingStrength, SolitonSpec, SINGULAR_POINT_TOL,
    THREE_QUARTERS,
};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_exponential_tail, uniform_breakpoints, Quadrature};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Error tolerance of the finite part of the mass quadrature.
pub const MASS_QUAD_TOL: f64 = 1e-13;
/// Bound on the truncated tail of the mass quadrature.
pub const MASS_TAIL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationSample {
    pub k: f64,
    /// `||u||_{L^2}`
    pub mass: f64,
    /// `d||u||^2/dk`; `None` at the fold where the curve turns.
    pub mass_sq_slope: Option<f64>,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTrace {
    pub epsilon: f64,
    /// Ordered along the curve: lower branch with increasing `k`, the fold, then the upper
    /// branch with decreasing `k`.
    pub samples: Vec<BifurcationSample>,
}

impl CurveTrace {
    pub fn fold_sample(&self) -> Option<&BifurcationSample> {
        self.samples.iter().find(|s| s.branch == Branch::Fold)
    }

    /// Indices where `k` changes direction along the trace.
    pub fn turning_points(&self) -> Vec<usize> {
        let ks: Vec<f64> = self.samples.iter().map(|s| s.k).collect();
        (1..ks.len().saturating_sub(1))
            .filter(|&i| (ks[i] - ks[i - 1]) * (ks[i + 1] - ks[i]) < 0.0)
            .collect()
    }
}

/// `phi_eps(k) - 1`, written without cancellation; valid for `eps >= 0` and
/// `eps^2/4 <= k <= 3/4`.
fn phi_minus_one(eps: f64, k: f64) -> f64 {
    let sk = k.sqrt();
    let q = (3.0 * eps * eps + (4.0 * k - eps * eps) * (3.0 - 4.0 * k))
        .max(0.0)
        .sqrt();
    let m = (4.0 * k - eps * eps) / (2.0 * sk + eps);
    let denom = SQRT_3 * eps + q + (SQRT_3 - 2.0 * sk) * m;
    4.0 * sk * m / denom
}

/// `phi_eps(k)`, with `||u||^2 = sqrt(3) ln phi` on the lower branch below `3/4`.
pub fn phi(epsilon: CouplingStrength, k: f64) -> f64 {
    1.0 + phi_minus_one(epsilon.value(), k)
}

pub fn phi_derivative(epsilon: CouplingStrength, k: f64) -> f64 {
    let eps = epsilon.value();
    let sk = k.sqrt();
    let q = (3.0 * eps * eps + (4.0 * k - eps * eps) * (3.0 - 4.0 * k)).sqrt();
    let m = 2.0 * sk - eps;
    let denom = SQRT_3 * eps + q + (SQRT_3 - 2.0 * sk) * m;
    8.0 * sk * (SQRT_3 * q + 2.0 * sk * (3.0 + eps * eps - 2.0 * eps * sk)) / (q * denom * denom)
}

/// Squared mass of the free-space soliton, `0 < k < 3/4`.
pub fn free_space_mass_squared(k: f64) -> Result<f64> {
    if !(k > 0.0 && k < THREE_QUARTERS) {
        return Err(Error::out_of_range("k", "(0, 3/4)", k));
    }
    Ok(SQRT_3 * phi_minus_one(0.0, k).ln_1p())
}

/// `2 * int_0^inf u^2 dx` by adaptive quadrature with a certified exponential tail.
pub fn mass_squared_by_quadrature(spec: &SolitonSpec) -> Result<Quadrature> {
    let profile = ClosedFormProfile::new(*spec)?;
    let rate = profile.decay_rate;
    // the upper branch near 3/4 has a plateau of length ~c before the tail starts
    let plateau = profile.integ_const_c.unwrap_or(0.0).max(0.0);
    let mut points = uniform_breakpoints(0.0, plateau + 40.0 / rate, 48);
    if plateau > 0.0 {
        points.push(plateau);
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    }
    let q = integrate_exponential_tail(
        |x| profile.value_sq(x),
        &points,
        2.0 * rate,
        0.5 * MASS_QUAD_TOL,
        0.5 * MASS_TAIL_TOL,
    )?;
    Ok(Quadrature {
        value: 2.0 * q.value,
        error: 2.0 * q.error,
        tail_bound: 2.0 * q.tail_bound,
        evaluations: q.evaluations,
    })
}

/// `||u||^2_{L^2}`: closed form on the lower branch below `3/4`, quadrature elsewhere.
pub fn mass_squared(spec: &SolitonSpec) -> Result<f64> {
    if spec.branch() == Branch::Lower && spec.k() < THREE_QUARTERS {
        Ok(SQRT_3 * phi_minus_one(spec.epsilon().value(), spec.k()).ln_1p())
    } else {
        Ok(mass_squared_by_quadrature(spec)?.value)
    }
}

/// `||u||_{L^2}`
pub fn mass(spec: &SolitonSpec) -> Result<f64> {
    Ok(mass_squared(spec)?.sqrt())
}

/// Exact `d||u||^2/dk`; undefined at `k = 3/4` and at the fold.
pub fn mass_sq_slope(spec: &SolitonSpec) -> Result<f64> {
    let eps = spec.epsilon().value();
    let k = spec.k();
    if spec.branch() == Branch::Front || spec.is_fold() {
        return Err(Error::InvalidArgument(format!(
            "d||u||^2/dk is not defined at k = {k} ({} point)",
            spec.branch()
        )));
    }
    if k < THREE_QUARTERS {
        return Ok(SQRT_3 * phi_derivative(spec.epsilon(), k) / phi(spec.epsilon(), k));
    }
    let r = (3.0 + eps * eps - 4.0 * k).sqrt();
    let a = 2.0 * SQRT_3 * eps / r;
    let b = 3.0 / k.sqrt();
    Ok(match spec.branch() {
        Branch::Lower => (a - b) / (4.0 * k - 3.0),
        _ => -(a + b) / (4.0 * k - 3.0),
    })
}

/// Common one-sided limit of the lower-branch slope at `k = 3/4`.
pub fn slope_limit_at_three_quarters(epsilon: CouplingStrength) -> f64 {
    let eps = epsilon.value();
    SQRT_3 * (1.0 / (eps * eps) + 1.0 / 3.0)
}

/// Spec for a point of the curve addressed by `(k, branch)`, mapping the singular points of the
/// lower branch onto the front and fold solutions.
pub fn curve_point(epsilon: CouplingStrength, k: f64, branch: Branch) -> Result<SolitonSpec> {
    if (k - fold_point(epsilon)).abs() < SINGULAR_POINT_TOL {
        return Ok(SolitonSpec::fold(epsilon));
    }
    if branch == Branch::Lower && (k - THREE_QUARTERS).abs() < SINGULAR_POINT_TOL {
        return Ok(SolitonSpec::front(epsilon));
    }
    SolitonSpec::new(epsilon, k, branch)
}

/// Curve sample for a spec; the slope at the front is the matching limit of both sides.
pub fn sample(spec: &SolitonSpec) -> Result<BifurcationSample> {
    let slope = match spec.branch() {
        _ if spec.is_fold() => None,
        Branch::Front => Some(slope_limit_at_three_quarters(spec.epsilon())),
        _ => Some(mass_sq_slope(spec)?),
    };
    Ok(BifurcationSample {
        k: spec.k(),
        mass: mass(spec)?,
        mass_sq_slope: slope,
        branch: if spec.is_fold() {
            Branch::Fold
        } else {
            spec.branch()
        },
    })
}

/// Distance kept from the singular ends `eps^2/4`, `k_bar` and `3/4` while tracing.
pub fn endpoint_guard(epsilon: CouplingStrength) -> f64 {
    1e-6 * (fold_point(epsilon) - epsilon.bifurcation_point())
}

/// Samples the whole curve. About half the samples go to the lower branch (uniform in `k`), one
/// to the fold, the rest to the upper branch, spaced geometrically in `k - 3/4` so that the
/// blow-up toward `3/4` is resolved.
pub fn trace_curve(epsilon: CouplingStrength, n_samples: usize) -> Result<CurveTrace> {
    if n_samples < 8 {
        return Err(Error::InvalidArgument(format!(
            "a curve trace needs at least 8 samples, got {n_samples}"
        )));
    }
    let guard = endpoint_guard(epsilon);
    let k_min = epsilon.bifurcation_point();
    let k_bar = fold_point(epsilon);
    let n_lower = n_samples / 2;
    let n_upper = n_samples - n_lower - 1;

    let mut points = Vec::with_capacity(n_samples);
    let (lo, hi) = (k_min + guard, k_bar - guard);
    for i in 0..n_lower {
        let k = lo + (hi - lo) * i as f64 / (n_lower - 1) as f64;
        let k = if (k - THREE_QUARTERS).abs() < 1e-9 {
            THREE_QUARTERS
        } else {
            k
        };
        points.push((k, Branch::Lower));
    }
    points.push((k_bar, Branch::Fold));
    let (d_hi, d_lo) = (k_bar - guard - THREE_QUARTERS, guard);
    for i in 0..n_upper {
        let t = i as f64 / (n_upper - 1) as f64;
        points.push((THREE_QUARTERS + d_hi * (d_lo / d_hi).powf(t), Branch::Upper));
    }

    let samples = points
        .into_par_iter()
        .map(|(k, branch)| sample(&curve_point(epsilon, k, branch)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveTrace {
        epsilon: epsilon.value(),
        samples,
    })
}

/// The free-space curve (`eps = 0`): a single branch on `(0, 3/4)`.
pub fn trace_free_space(n_samples: usize) -> Result<Vec<BifurcationSample>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "a curve trace needs at least 2 samples, got {n_samples}"
        )));
    }
    let guard = 1e-6 * THREE_QUARTERS;
    (0..n_samples)
        .map(|i| {
            let k = guard + (THREE_QUARTERS - 2.0 * guard) * i as f64 / (n_samples - 1) as f64;
            let h = 1e-7 * k.min(THREE_QUARTERS - k);
            let slope =
                (free_space_mass_squared(k + h)? - free_space_mass_squared(k - h)?) / (2.0 * h);
            Ok(BifurcationSample {
                k,
                mass: free_space_mass_squared(k)?.sqrt(),
                mass_sq_slope: Some(slope),
                branch: Branch::Lower,
            })
        })
        .collect()
}

/// Inverts `k -> ||u||` on one branch. The mass is strictly monotone on each branch, so the
/// root is bracketed and found by bisection, then polished with one Newton step on the exact
/// slope.
pub fn solve_k_for_mass(
    epsilon: CouplingStrength,
    target_mass: f64,
    branch: Branch,
) -> Result<f64> {
    let k_bar = fold_point(epsilon);
    let fold_mass = mass(&SolitonSpec::fold(epsilon))?;
    let mass_at = |k: f64| -> Result<f64> {
        if branch == Branch::Lower && k <= epsilon.bifurcation_point() {
            return Ok(0.0);
        }
        mass(&curve_point(epsilon, k, branch)?)
    };
    let out_of_range = |lo: f64, hi: f64| Error::MassOutOfRange {
        target: target_mass,
        branch: branch.as_str(),
        lo,
        hi,
        fold_mass,
    };

    // bracket [k_lo, k_hi] with g(k) = mass(k) - target changing sign; `increasing` tells the
    // direction of the mass along k
    let (mut k_lo, mut k_hi, increasing) = match branch {
        Branch::Lower => {
            if !(target_mass > 0.0 && target_mass < fold_mass) {
                return Err(out_of_range(0.0, fold_mass));
            }
            (epsilon.bifurcation_point(), k_bar, true)
        }
        Branch::Upper => {
            if !(target_mass > fold_mass) {
                return Err(out_of_range(fold_mass, f64::INFINITY));
            }
            let mut d = 0.1 * (k_bar - THREE_QUARTERS);
            loop {
                if mass_at(THREE_QUARTERS + d)? > target_mass {
                    break;
                }
                d *= 0.1;
                if d < 1e-13 {
                    return Err(out_of_range(fold_mass, mass_at(THREE_QUARTERS + 10.0 * d)?));
                }
            }
            (THREE_QUARTERS + d, k_bar, false)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "mass inversion needs the lower or upper branch, not {other}"
            )))
        }
    };

    while k_hi - k_lo > 1e-12 * k_hi {
        let mid = 0.5 * (k_lo + k_hi);
        if mid <= k_lo || mid >= k_hi {
            break;
        }
        let above = mass_at(mid)? > target_mass;
        if above == increasing {
            k_hi = mid;
        } else {
            k_lo = mid;
        }
    }
    let mut k = 0.5 * (k_lo + k_hi);
    let spec = curve_point(epsilon, k, branch)?;
    if !spec.is_fold() && spec.branch() != Branch::Front {
        let m = mass(&spec)?;
        let dm_dk = mass_sq_slope(&spec)? / (2.0 * m);
        let polished = k - (m - target_mass) / dm_dk;
        if polished.is_finite() && (polished - k).abs() <= (k_hi - k_lo).max(1e-15) {
            let improved = mass_at(polished)?;
            if (improved - target_mass).abs() <= (m - target_mass).abs() {
                k = polished;
            }
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(v: f64) -> CouplingStrength {
        CouplingStrength::new(v).unwrap()
    }

    fn spec(e: f64, k: f64, b: Branch) -> SolitonSpec {
        SolitonSpec::new(eps(e), k, b).unwrap()
    }

    #[test]
    fn mass_vanishes_at_bifurcation() {
        let c = eps(0.7);
        assert_eq!(phi(c, c.bifurcation_point()), 1.0);
        let near = spec(0.7, c.bifurcation_point() * (1.0 + 1e-12), Branch::Lower);
        assert!(mass_squared(&near).unwrap() < 1e-10);
    }

    #[test]
    fn closed_form_mass_matches_quadrature() {
        for &e in &[0.1, 0.5, 1.0, 1.6] {
            let c = eps(e);
            let lo = c.bifurcation_point();
            for f in [0.01, 0.3, 0.7, 0.99] {
                let s = spec(e, lo + f * (THREE_QUARTERS - lo), Branch::Lower);
                let quad = mass_squared_by_quadrature(&s).unwrap().value;
                assert!(
                    (mass_squared(&s).unwrap() - quad).abs() < 1e-8,
                    "e={e} f={f}"
                );
            }
        }
    }

    #[test]
    fn upper_mass_blows_up_toward_three_quarters() {
        let c = eps(0.5 * SQRT_3);
        let masses: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|d| mass_squared(&SolitonSpec::new(c, 0.75 + d, Branch::Upper).unwrap()).unwrap())
            .collect();
        assert!(masses.windows(2).all(|w| w[1] > w[0] + 2.0), "{masses:?}");
    }

    #[test]
    fn slope_signs() {
        for &e in &[0.2, 1.0, 1.6] {
            let c = eps(e);
            let (lo, kb) = (c.bifurcation_point(), c.fold_point());
            for i in 1..20 {
                let k = lo + (kb - lo) * i as f64 / 20.0;
                if (k - 0.75).abs() < 1e-9 {
                    continue;
                }
                assert!(mass_sq_slope(&spec(e, k, Branch::Lower)).unwrap() > 0.0);
                if k > 0.75 {
                    assert!(mass_sq_slope(&spec(e, k, Branch::Upper)).unwrap() < 0.0);
                }
            }
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        let step = 1e-5;
        for &e in &[0.3, 1.0, 1.5] {
            let c = eps(e);
            let (lo, kb) = (c.bifurcation_point(), c.fold_point());
            let mut cases = vec![(lo + 0.5 * (0.75 - lo), Branch::Lower)];
            for f in [0.3, 0.6] {
                let k = 0.75 + f * (kb - 0.75);
                cases.push((k, Branch::Lower));
                cases.push((k, Branch::Upper));
            }
            for (k, b) in cases {
                let exact = mass_sq_slope(&spec(e, k, b)).unwrap();
                let fd = (mass_squared(&spec(e, k + step, b)).unwrap()
                    - mass_squared(&spec(e, k - step, b)).unwrap())
                    / (2.0 * step);
                assert!(
                    ((fd - exact) / exact).abs() < 1e-5,
                    "e={e} k={k} {b}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn slope_diverges_at_fold() {
        let c = eps(1.0);
        let kb = c.fold_point();
        let lower = mass_sq_slope(&spec(1.0, kb - 1e-10, Branch::Lower)).unwrap();
        let upper = mass_sq_slope(&spec(1.0, kb - 1e-10, Branch::Upper)).unwrap();
        assert!(lower > 1e4 && upper < -1e4);
        assert!(mass_sq_slope(&SolitonSpec::fold(c)).is_err());
        assert!(mass_sq_slope(&SolitonSpec::front(c)).is_err());
    }

    #[test]
    fn slope_limit_examples() {
        let lim = slope_limit_at_three_quarters(eps(0.5 * SQRT_3));
        assert!((lim - 5.0 * SQRT_3 / 3.0).abs() < 1e-14);
        let near_top = slope_limit_at_three_quarters(eps(SQRT_3 * (1.0 - 1e-12)));
        assert!((near_top - 2.0 * SQRT_3 / 3.0).abs() < 1e-10);
        for &e in &[0.3, 0.8, 1.5] {
            let lim = slope_limit_at_three_quarters(eps(e));
            for k in [0.75 - 1e-4, 0.75 + 1e-4] {
                let s = mass_sq_slope(&spec(e, k, Branch::Lower)).unwrap();
                assert!(((s - lim) / lim).abs() < 0.01, "e={e} k={k}: {s} vs {lim}");
            }
        }
    }

    #[test]
    fn trace_is_monotone_with_single_fold() {
        for frac in [0.1, 0.5, 0.9] {
            let c = eps(frac * SQRT_3);
            let trace = trace_curve(c, 40).unwrap();
            assert_eq!(trace.samples.len(), 40);
            assert!(trace.samples.windows(2).all(|w| w[1].mass > w[0].mass));
            let turns = trace.turning_points();
            assert_eq!(turns.len(), 1);
            assert_eq!(trace.samples[turns[0]].branch, Branch::Fold);
            assert_eq!(trace.samples[turns[0]].k, c.fold_point());
            assert!(trace.samples[0].mass < 1e-2);
        }
    }

    #[test]
    fn fold_mass_is_bracketed() {
        let trace = trace_curve(eps(1.0), 21).unwrap();
        let i = trace.turning_points()[0];
        let (before, fold, after) = (
            &trace.samples[i - 1],
            &trace.samples[i],
            &trace.samples[i + 1],
        );
        assert_eq!(before.branch, Branch::Lower);
        assert_eq!(after.branch, Branch::Upper);
        assert!(before.mass < fold.mass && fold.mass < after.mass);
        assert!(fold.mass_sq_slope.is_none());
    }

    #[test]
    fn trace_rejects_few_samples() {
        assert!(trace_curve(eps(1.0), 7).is_err());
    }

    #[test]
    fn bistable_window() {
        let c = eps(1.2);
        let (guard, kb) = (endpoint_guard(c), c.fold_point());
        for i in 0..50 {
            let k = 0.75 + guard + (kb - 0.75 - 2.0 * guard) * (i as f64 + 0.5) / 50.0;
            let lo = mass(&spec(1.2, k, Branch::Lower)).unwrap();
            let up = mass(&spec(1.2, k, Branch::Upper)).unwrap();
            assert!(up > lo);
        }
    }

    #[test]
    fn inversion_round_trips() {
        let c = eps(0.5 * SQRT_3);
        let kb = c.fold_point();
        for (k0, b) in [
            (0.3, Branch::Lower),
            (0.7, Branch::Lower),
            (0.8, Branch::Lower),
            (0.8, Branch::Upper),
            (0.76, Branch::Upper),
            (kb - 0.01, Branch::Upper),
        ] {
            let m = mass(&spec(0.5 * SQRT_3, k0, b)).unwrap();
            let k = solve_k_for_mass(c, m, b).unwrap();
            assert!((k - k0).abs() < 1e-9, "{b} {k0} -> {k}");
            let back = mass(&spec(0.5 * SQRT_3, k, b)).unwrap();
            assert!((back - m).abs() < 1e-10);
        }
    }

    #[test]
    fn inversion_small_mass_goes_to_bifurcation() {
        let c = eps(1.0);
        let k = solve_k_for_mass(c, 1e-4, Branch::Lower).unwrap();
        assert!((k - c.bifurcation_point()).abs() < 1e-6);
    }

    #[test]
    fn inversion_range_errors() {
        let c = eps(0.5 * SQRT_3);
        let fold_mass = mass(&SolitonSpec::fold(c)).unwrap();
        match solve_k_for_mass(c, 0.9 * fold_mass, Branch::Upper) {
            Err(Error::MassOutOfRange { fold_mass: fm, .. }) => {
                assert!((fm - fold_mass).abs() < 1e-12)
            }
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(solve_k_for_mass(c, 1.1 * fold_mass, Branch::Lower).is_err());
        assert!(solve_k_for_mass(c, 1.0, Branch::Fold).is_err());
    }

    #[test]
    fn free_space_curve() {
        let curve = trace_free_space(30).unwrap();
        assert!(curve.windows(2).all(|w| w[1].mass > w[0].mass));
        assert!(curve.iter().all(|s| s.k < 0.75));
        // matches quadrature of the free soliton
        let k: f64 = 0.4;
        let q = crate::quadrature::integrate_exponential_tail(
            |x| {
                crate::closed_form::free_space_profile(k, x)
                    .unwrap()
                    .powi(2)
            },
            &uniform_breakpoints(0.0, 40.0, 16),
            2.0 * k.sqrt(),
            1e-13,
            1e-13,
        )
        .unwrap();
        assert!((free_space_mass_squared(k).unwrap() - 2.0 * q.value).abs() < 1e-10);
    }
}
