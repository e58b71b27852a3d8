//! Exact positive bound states of
//!
//! ```text
//! u'' - k u + eps delta(x) u + 2 u^3 - u^5 = 0
//! ```
//!
//! Every positive solution is even, decays like `exp(-sqrt(k)|x|)` and is one of four closed
//! forms depending on where `k` sits relative to `3/4` and the fold `k_bar = 3/4 + eps^2/4`:
//!
//! * `eps^2/4 < k < 3/4`: the free-space soliton shifted outward by `xi` (lower branch only),
//! * `k = 3/4`: the front soliton,
//! * `3/4 < k < k_bar`: two solutions, written with an integration constant `c`,
//! * `k = k_bar`: the fold profile where both branches meet.
//!
//! The exponentials are always evaluated with a non-positive argument so that the profiles can be
//! sampled arbitrarily far into the tail without overflow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary between the pinned-soliton regime and the two-branch regime.
pub const THREE_QUARTERS: f64 = 0.75;

/// Distance from `3/4` (resp. the fold) below which a propagation constant is treated as sitting
/// exactly on it.
pub const SINGULAR_POINT_TOL: f64 = 1e-12;

/// Radicands in `[-RADICAND_TOL, 0)` are rounding noise and are clamped to zero.
pub const RADICAND_TOL: f64 = 1e-12;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

fn clamped_sqrt(radicand: f64) -> Result<f64> {
    if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand >= -RADICAND_TOL {
        Ok(0.0)
    } else {
        Err(Error::NegativeRadicand(radicand))
    }
}

/// Strength `eps` of the attractive delta potential, restricted to `0 < eps < sqrt(3)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CouplingStrength(f64);

impl CouplingStrength {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 && epsilon < SQRT_3 {
            Ok(Self(epsilon))
        } else {
            Err(Error::InvalidCoupling(epsilon))
        }
    }

    /// `eps = fraction * sqrt(3)`, the parametrization used for the benchmark diagrams.
    pub fn from_sqrt3_fraction(fraction: f64) -> Result<Self> {
        Self::new(fraction * SQRT_3)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Left end `eps^2/4` of the existence interval, where the curve leaves `u = 0`.
    pub fn bifurcation_point(self) -> f64 {
        0.25 * self.0 * self.0
    }

    pub fn fold_point(self) -> f64 {
        fold_point(self)
    }
}

impl TryFrom<f64> for CouplingStrength {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CouplingStrength> for f64 {
    fn from(eps: CouplingStrength) -> f64 {
        eps.0
    }
}

impl fmt::Display for CouplingStrength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Solutions with the smaller peak amplitude, `k in (eps^2/4, k_bar)`.
    Lower,
    /// Solutions with the larger peak amplitude, `k in (3/4, k_bar)`.
    Upper,
    /// The lower-branch solution at exactly `k = 3/4`.
    Front,
    /// The turning point `k = k_bar`.
    Fold,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::Front => "front",
            Branch::Fold => "fold",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lower" | "-" | "minus" => Ok(Branch::Lower),
            "upper" | "+" | "plus" => Ok(Branch::Upper),
            "front" => Ok(Branch::Front),
            "fold" => Ok(Branch::Fold),
            other => Err(Error::InvalidArgument(format!(
                "unknown branch '{other}' (expected lower, upper, front or fold)"
            ))),
        }
    }
}

/// Fold (turning point) of the solution curve, `k_bar = 3/4 + eps^2/4`.
pub fn fold_point(epsilon: CouplingStrength) -> f64 {
    THREE_QUARTERS + epsilon.bifurcation_point()
}

/// One exact bound state: coupling, propagation constant and branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    epsilon: CouplingStrength,
    k: f64,
    branch: Branch,
}

impl SolitonSpec {
    pub fn new(epsilon: CouplingStrength, k: f64, branch: Branch) -> Result<Self> {
        let eps = epsilon.value();
        let k_bar = fold_point(epsilon);
        let k_min = epsilon.bifurcation_point();
        if !k.is_finite() {
            return Err(Error::InvalidSpec(format!("k must be finite, got {k}")));
        }
        let near_fold = (k - k_bar).abs() < SINGULAR_POINT_TOL;
        let near_front = (k - THREE_QUARTERS).abs() < SINGULAR_POINT_TOL;
        let k = match branch {
            Branch::Lower => {
                if near_front {
                    return Err(Error::InvalidSpec(
                        "k = 3/4 on the lower branch is the front soliton; use branch front".into(),
                    ));
                }
                if near_fold {
                    k_bar
                } else if k <= k_min || k > k_bar {
                    return Err(Error::InvalidSpec(format!(
                        "k must lie in (eps^2/4, 3/4 + eps^2/4] = ({k_min}, {k_bar}] for branch lower \
                         (eps = {eps}), got {k}"
                    )));
                } else {
                    k
                }
            }
            Branch::Upper => {
                if near_fold {
                    k_bar
                } else if k <= THREE_QUARTERS + SINGULAR_POINT_TOL || k > k_bar {
                    return Err(Error::InvalidSpec(format!(
                        "k must lie in (3/4, 3/4 + eps^2/4] = (0.75, {k_bar}] for branch upper \
                         (eps = {eps}), got {k}"
                    )));
                } else {
                    k
                }
            }
            Branch::Front => {
                if !near_front {
                    return Err(Error::InvalidSpec(format!(
                        "branch front requires k = 3/4, got {k}"
                    )));
                }
                THREE_QUARTERS
            }
            Branch::Fold => {
                if !near_fold {
                    return Err(Error::InvalidSpec(format!(
                        "branch fold requires k = 3/4 + eps^2/4 = {k_bar}, got {k}"
                    )));
                }
                k_bar
            }
        };
        Ok(Self { epsilon, k, branch })
    }

    pub fn front(epsilon: CouplingStrength) -> Self {
        Self {
            epsilon,
            k: THREE_QUARTERS,
            branch: Branch::Front,
        }
    }

    pub fn fold(epsilon: CouplingStrength) -> Self {
        Self {
            epsilon,
            k: fold_point(epsilon),
            branch: Branch::Fold,
        }
    }

    pub fn epsilon(&self) -> CouplingStrength {
        self.epsilon
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// Lower/Upper specs sitting exactly on `k_bar` are the fold profile.
    pub fn is_fold(&self) -> bool {
        self.branch == Branch::Fold || self.k == fold_point(self.epsilon)
    }

    fn uses_plus_sign(&self) -> bool {
        matches!(self.branch, Branch::Upper | Branch::Fold)
    }
}

/// Squared peak amplitude `u(0)^2`, the root of `u^4 - 3u^2 + 3(k - eps^2/4) = 0` that belongs to
/// the spec's branch.
pub fn peak_amplitude_squared(spec: &SolitonSpec) -> f64 {
    let reduced = spec.k - spec.epsilon.bifurcation_point();
    let disc = (1.0 - 4.0 / 3.0 * reduced).max(0.0);
    let s = disc.sqrt();
    if spec.uses_plus_sign() {
        1.5 * (1.0 + s)
    } else {
        // 1.5 (1 - s) without the cancellation near the bifurcation point
        2.0 * reduced / (1.0 + s)
    }
}

/// Squared amplitudes `(u~_-^2, u~_+^2)` bounding the admissible range of the first-order ODE for
/// `0 < k < 3/4`.
pub fn tilde_bounds(k: f64) -> Result<(f64, f64)> {
    if !(k > 0.0 && k <= THREE_QUARTERS) {
        return Err(Error::out_of_range("k", "(0, 3/4]", k));
    }
    let s = (1.0 - 4.0 * k / 3.0).max(0.0).sqrt();
    Ok((2.0 * k / (1.0 + s), 1.5 * (1.0 + s)))
}

fn require_pinned_regime(epsilon: CouplingStrength, k: f64) -> Result<()> {
    let k_min = epsilon.bifurcation_point();
    if k > k_min && k < THREE_QUARTERS {
        Ok(())
    } else {
        Err(Error::out_of_range(
            "k",
            format!("(eps^2/4, 3/4) = ({k_min}, 0.75)"),
            k,
        ))
    }
}

/// `ln exp(2 sqrt(k) xi)`, the logarithm of the pinning shift factor.
fn log_shift_factor(epsilon: CouplingStrength, k: f64) -> f64 {
    let eps = epsilon.value();
    let sk = k.sqrt();
    let s = (1.0 - 4.0 * k / 3.0).sqrt();
    let numer = eps + (eps * eps + (4.0 * k - eps * eps) * (1.0 - 4.0 * k / 3.0)).sqrt();
    // sqrt(k) - eps/2 written to avoid cancellation near k = eps^2/4
    let gap = (k - 0.25 * eps * eps) / (sk + 0.5 * eps);
    numer.ln() - (2.0 * gap * s).ln()
}

/// Outward shift `xi` of the pinned lower-branch profile, `eps^2/4 < k < 3/4`.
pub fn shift_xi(epsilon: CouplingStrength, k: f64) -> Result<f64> {
    require_pinned_regime(epsilon, k)?;
    Ok(log_shift_factor(epsilon, k) / (2.0 * k.sqrt()))
}

/// Integration constant `c` of the two-branch regime `3/4 < k < k_bar`.
pub fn integration_constant_c(epsilon: CouplingStrength, k: f64, branch: Branch) -> Result<f64> {
    let k_bar = fold_point(epsilon);
    if !(k > THREE_QUARTERS && k < k_bar) {
        return Err(Error::out_of_range(
            "k",
            format!("(3/4, 3/4 + eps^2/4) = (0.75, {k_bar})"),
            k,
        ));
    }
    let eps = epsilon.value();
    let sk = k.sqrt();
    let r = clamped_sqrt(3.0 + eps * eps - 4.0 * k)?;
    let (numer, denom) = match branch {
        Branch::Lower => (
            3.0 - SQRT_3 * r + 2.0 * eps * sk - 4.0 * k,
            -3.0 + SQRT_3 * r + 2.0 * SQRT_3 * sk - 2.0 * sk * r,
        ),
        Branch::Upper => (
            -3.0 - SQRT_3 * r - 2.0 * eps * sk + 4.0 * k,
            3.0 + SQRT_3 * r - 2.0 * SQRT_3 * sk - 2.0 * sk * r,
        ),
        other => {
            return Err(Error::InvalidArgument(format!(
                "integration constant is defined for lower and upper branches, not {other}"
            )))
        }
    };
    let ratio = numer / denom;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::NegativeRadicand(ratio));
    }
    // exp(sqrt(k) c) = sqrt(ratio)
    Ok(0.5 * ratio.ln() / sk)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `u^2 = 2k / (1 + s cosh(2 sqrt(k) |x| + log_shift))`
    Pinned { log_shift: f64, s: f64 },
    /// Euler-substitution form with `E = exp(sqrt(k)(|x| - c))`.
    TwoBranch { c: f64, a: f64 },
    /// `u^2 = (3/2) / (1 + b exp(sqrt(3)|x|))`
    Front { b: f64 },
    /// `u^2 = (3/2) beta^2 / (3 + eps^2 cosh(beta|x|) + eps beta sinh(beta|x|))`
    Fold { beta: f64, eps: f64 },
}

/// A bound state with its derived constants precomputed, for repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormProfile {
    pub spec: SolitonSpec,
    /// `u(0)^2`
    pub peak_sq: f64,
    /// Pinning shift, present only on the lower branch below `3/4`.
    pub shift_xi: Option<f64>,
    /// Integration constant, present only for `3/4 < k < k_bar`.
    pub integ_const_c: Option<f64>,
    /// `sqrt(k)`
    pub decay_rate: f64,
    shape: Shape,
}

impl ClosedFormProfile {
    pub fn new(spec: SolitonSpec) -> Result<Self> {
        let eps = spec.epsilon.value();
        let k = spec.k;
        let mut shift_xi = None;
        let mut integ_const_c = None;
        let shape = if spec.is_fold() {
            Shape::Fold {
                beta: (3.0 + eps * eps).sqrt(),
                eps,
            }
        } else {
            match spec.branch {
                Branch::Front => Shape::Front {
                    b: eps / (SQRT_3 - eps),
                },
                Branch::Lower if k < THREE_QUARTERS => {
                    let log_shift = log_shift_factor(spec.epsilon, k);
                    shift_xi = Some(log_shift / (2.0 * k.sqrt()));
                    Shape::Pinned {
                        log_shift,
                        s: (1.0 - 4.0 * k / 3.0).sqrt(),
                    }
                }
                branch => {
                    let c = integration_constant_c(spec.epsilon, k, branch)?;
                    integ_const_c = Some(c);
                    Shape::TwoBranch {
                        c,
                        a: 2.0 * (k / 3.0).sqrt(),
                    }
                }
            }
        };
        Ok(Self {
            spec,
            peak_sq: peak_amplitude_squared(&spec),
            shift_xi,
            integ_const_c,
            decay_rate: k.sqrt(),
            shape,
        })
    }

    /// `u(x)^2`; evaluated through `|x|`, so exactly even.
    pub fn value_sq(&self, x: f64) -> f64 {
        let ax = x.abs();
        let k = self.spec.k;
        match self.shape {
            Shape::Pinned { log_shift, s } => {
                let theta = 2.0 * self.decay_rate * ax + log_shift;
                if theta >= 0.0 {
                    let e = (-theta).exp();
                    4.0 * k * e / (2.0 * e + s * (1.0 + e * e))
                } else {
                    2.0 * k / (1.0 + s * theta.cosh())
                }
            }
            Shape::TwoBranch { c, a } => {
                let y = self.decay_rate * (ax - c);
                if y >= 0.0 {
                    let e2 = (-2.0 * y).exp();
                    4.0 * k * e2 / ((1.0 + e2) * ((a + 1.0) - (a - 1.0) * e2))
                } else {
                    let e2 = (2.0 * y).exp();
                    4.0 * k * e2 / ((e2 + 1.0) * ((a + 1.0) * e2 - (a - 1.0)))
                }
            }
            Shape::Front { b } => {
                let e = (-SQRT_3 * ax).exp();
                1.5 * e / (e + b)
            }
            Shape::Fold { beta, eps } => {
                let e = (-beta * ax).exp();
                let denom =
                    3.0 * e + 0.5 * eps * eps * (1.0 + e * e) + 0.5 * eps * beta * (1.0 - e * e);
                1.5 * beta * beta * e / denom
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.value_sq(x).sqrt()
    }

    /// `u'(x)` for `x != 0` from the separated first-order ODE.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(Error::InvalidArgument(
                "u' is discontinuous at x = 0; use derivative_at_origin with a side".into(),
            ));
        }
        self.signed_derivative(x.abs(), -x.signum())
    }

    /// One-sided derivative `u'(0+)` or `u'(0-)`.
    pub fn derivative_at_origin(&self, side: Side) -> Result<f64> {
        let sign = match side {
            Side::Right => -1.0,
            Side::Left => 1.0,
        };
        self.signed_derivative(0.0, sign)
    }

    fn signed_derivative(&self, ax: f64, sign: f64) -> Result<f64> {
        let u2 = self.value_sq(ax);
        let root = clamped_sqrt(u2 * u2 / 3.0 - u2 + self.spec.k)?;
        Ok(sign * u2.sqrt() * root)
    }

    /// `(u')^2 - k u^2 + u^4 - u^6/3`, identically zero for exact profiles.
    pub fn first_integral_residual(&self, x: f64) -> Result<f64> {
        let u2 = self.value_sq(x);
        let du = if x == 0.0 {
            self.derivative_at_origin(Side::Right)?
        } else {
            self.derivative(x)?
        };
        Ok(du * du - self.spec.k * u2 + u2 * u2 - u2 * u2 * u2 / 3.0)
    }

    /// Samples `u` at the given abscissae.
    pub fn sample(&self, xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
        xs.into_iter().map(|x| self.value(x)).collect()
    }
}

/// Side of the origin for one-sided derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

pub fn eval_profile(spec: &SolitonSpec, x: f64) -> Result<f64> {
    Ok(ClosedFormProfile::new(*spec)?.value(x))
}

pub fn eval_derivative(spec: &SolitonSpec, x: f64) -> Result<f64> {
    ClosedFormProfile::new(*spec)?.derivative(x)
}

pub fn first_integral_residual(spec: &SolitonSpec, x: f64) -> Result<f64> {
    ClosedFormProfile::new(*spec)?.first_integral_residual(x)
}

/// Free-space soliton (`eps = 0`) for `0 < k < 3/4`.
pub fn free_space_profile(k: f64, x: f64) -> Result<f64> {
    if !(k > 0.0 && k < THREE_QUARTERS) {
        return Err(Error::out_of_range("k", "(0, 3/4)", k));
    }
    let s = (1.0 - 4.0 * k / 3.0).sqrt();
    let theta = 2.0 * k.sqrt() * x.abs();
    let e = (-theta).exp();
    Ok((4.0 * k * e / (2.0 * e + s * (1.0 + e * e))).sqrt())
}
