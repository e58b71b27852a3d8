//! Continuous normalized gradient flow (imaginary-time propagation) for the constrained
//! minimization of
//!
//! ```text
//! E(u) = 1/2 ( ||u_x||^2 - eps |u(0)|^2 - ||u||_4^4 + ||u||_6^6 / 3 ),   ||u||_2 = a.
//! ```
//!
//! Each step is a semi-implicit backward-Euler solve of `u_t = u_xx + eps delta u + 2u^3 - u^5`
//! with the nonlinear coefficients frozen at the previous iterate, followed by rescaling to the
//! prescribed mass. The fixed points of the iteration do not depend on `dt`.
//!
//! Two treatments of the delta at the origin node `j0` are available, see [`JumpDiscretization`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::tridiag::{solve_spd, solve_spd_twisted};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_MAX_STEPS: usize = 2_000_000;
pub const DEFAULT_CONV_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpDiscretization {
    /// `u_j0` stays an unknown; the delta adds `-eps/h` to its diagonal entry. One symmetric
    /// tridiagonal system couples both half-lines, and the iteration is exactly the gradient
    /// flow of the discrete energy.
    #[default]
    Lumped,
    /// `u_j0` is eliminated through `u_{j0 +- 1} = (1 - h eps / 2) u_j0` and reconstructed after
    /// the solve. The two half-lines decouple; they are solved as mirror images so that even
    /// data stays exactly even. First order in `h` at the origin.
    Eliminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CngfConfig {
    pub dt: f64,
    /// Prescribed `||u||_2`.
    pub mass_a: f64,
    pub max_steps: usize,
    /// Stop once `max_j |u^{n+1}_j - u^n_j| / dt` drops below this.
    pub conv_tol: f64,
    #[serde(default)]
    pub jump: JumpDiscretization,
}

impl CngfConfig {
    pub fn new(mass_a: f64) -> Self {
        Self {
            dt: DEFAULT_DT,
            mass_a,
            max_steps: DEFAULT_MAX_STEPS,
            conv_tol: DEFAULT_CONV_TOL,
            jump: JumpDiscretization::Lumped,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::out_of_range("dt", "(0, inf)", self.dt));
        }
        if !(self.mass_a > 0.0 && self.mass_a.is_finite()) {
            return Err(Error::out_of_range("mass_a", "(0, inf)", self.mass_a));
        }
        if !(self.conv_tol > 0.0) {
            return Err(Error::out_of_range("conv_tol", "(0, inf)", self.conv_tol));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CngfResult {
    pub profile: GridFunction,
    pub extracted_k: f64,
    pub energy: f64,
    pub steps_taken: usize,
    pub converged: bool,
    /// `max_j |u^{n+1}_j - u^n_j| / dt` at the last step.
    pub final_change: f64,
    /// Largest single-step energy increase seen (non-positive for a monotone descent).
    pub max_energy_increase: f64,
}

/// Progress of one flow step, handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepReport<'a> {
    pub step: usize,
    pub profile: &'a [f64],
    pub change: f64,
    pub energy: f64,
}

pub fn build_grid(x_min: f64, x_max: f64, intervals: usize) -> Result<Grid> {
    Grid::new(x_min, x_max, intervals)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("epsilon", "[0, inf)", epsilon))
    }
}

/// Discrete norms entering the energy and the eigenvalue.
#[derive(Debug, Clone, Copy)]
struct Norms {
    /// `||u_x||^2` with forward differences
    grad_sq: f64,
    l2_sq: f64,
    l4: f64,
    l6: f64,
    origin_sq: f64,
}

fn norms(u: &GridFunction) -> Norms {
    let h = u.grid().h();
    let v = u.values();
    let grad_sq = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h;
    let (mut l2, mut l4, mut l6) = (0.0, 0.0, 0.0);
    for &x in v {
        let x2 = x * x;
        l2 += x2;
        l4 += x2 * x2;
        l6 += x2 * x2 * x2;
    }
    Norms {
        grad_sq,
        l2_sq: h * l2,
        l4: h * l4,
        l6: h * l6,
        origin_sq: u.at_origin().powi(2),
    }
}

/// Discrete energy; `epsilon = 0` gives the free-space functional.
pub fn energy(u: &GridFunction, epsilon: f64) -> f64 {
    let n = norms(u);
    0.5 * (n.grad_sq - epsilon * n.origin_sq - n.l4 + n.l6 / 3.0)
}

/// Nonlinear eigenvalue `k` of a (near-)stationary profile.
pub fn extracted_k(u: &GridFunction, epsilon: f64) -> Result<f64> {
    let n = norms(u);
    if !(n.l2_sq > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok((-n.grad_sq + epsilon * n.origin_sq + 2.0 * n.l4 - n.l6) / n.l2_sq)
}

/// Reusable buffers for repeated steps on one grid.
struct Stepper {
    grid: Grid,
    cfg: CngfConfig,
    /// Delta strength as seen by the solver; only fault injection makes it differ from `eps`.
    epsilon: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    rhs: Vec<f64>,
}

impl Stepper {
    fn new(grid: Grid, cfg: CngfConfig, epsilon: f64, delta_sign: f64) -> Result<Self> {
        cfg.validate()?;
        check_epsilon(epsilon)?;
        let j0 = grid.origin();
        if j0 < 2 || grid.intervals() - j0 < 2 {
            return Err(Error::InvalidGrid(
                "the origin needs at least two nodes on each side".into(),
            ));
        }
        if cfg.jump == JumpDiscretization::Eliminated && grid.h() * epsilon >= 2.0 {
            return Err(Error::InvalidGrid(format!(
                "h * eps = {} must be below 2 for the eliminated jump relation",
                grid.h() * epsilon
            )));
        }
        let n = grid.len();
        let epsilon = epsilon * delta_sign;
        Ok(Self {
            grid,
            cfg,
            epsilon,
            diag: Vec::with_capacity(n),
            off: Vec::with_capacity(n),
            rhs: Vec::with_capacity(n),
        })
    }

    /// Assembles and solves one backward-Euler system over `nodes` (taken in order). The node
    /// in `special` gets the given extra diagonal term; with `twist` the elimination meets at
    /// that node instead of running in one direction. The solution is written into `out`.
    fn solve_chain(
        &mut self,
        u: &[f64],
        nodes: impl Iterator<Item = usize>,
        special: Option<(usize, f64)>,
        twist: Option<usize>,
        out: &mut [f64],
    ) -> Result<()> {
        let h2 = self.grid.h() * self.grid.h();
        let inv_dt = 1.0 / self.cfg.dt;
        self.diag.clear();
        self.rhs.clear();
        let mut order = Vec::new();
        for j in nodes {
            let u2 = u[j] * u[j];
            let mut d = inv_dt + 2.0 / h2 - 2.0 * u2 + u2 * u2;
            if let Some((row, shift)) = special {
                if row == j {
                    d += shift;
                }
            }
            self.diag.push(d);
            self.rhs.push(u[j] * inv_dt);
            order.push(j);
        }
        self.off.clear();
        self.off.resize(order.len().saturating_sub(1), -1.0 / h2);
        let solved = match twist.and_then(|node| order.iter().position(|&j| j == node)) {
            Some(center) => solve_spd_twisted(&self.diag, &self.off, &self.rhs, center),
            None => solve_spd(&self.diag, &self.off, &self.rhs),
        };
        let x = solved.map_err(|e| match e {
            Error::SingularSystem { row, pivot } => Error::SingularSystem {
                row: order[row],
                pivot,
            },
            other => other,
        })?;
        for (j, v) in order.into_iter().zip(x) {
            out[j] = v;
        }
        Ok(())
    }

    /// One step without the final rescaling.
    fn unnormalized_step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid;
        let (h, j0, last) = (grid.h(), grid.origin(), grid.intervals());
        let mut star = vec![0.0; grid.len()];
        match self.cfg.jump {
            JumpDiscretization::Lumped => {
                let shift = -self.epsilon / h;
                self.solve_chain(u, 1..last, Some((j0, shift)), Some(j0), &mut star)?;
            }
            JumpDiscretization::Eliminated => {
                // neighbour row: (u*_{j0}) / h^2 replaced by u*_{j0 +- 1} * 2/(2 - h eps) / h^2
                let shift = -2.0 / (2.0 - h * self.epsilon) / (h * h);
                self.solve_chain(u, j0 + 1..last, Some((j0 + 1, shift)), None, &mut star)?;
                self.solve_chain(u, (1..j0).rev(), Some((j0 - 1, shift)), None, &mut star)?;
                let ratio = 1.0 - 0.5 * h * self.epsilon;
                star[j0] = 0.5 * (star[j0 - 1] + star[j0 + 1]) / ratio;
            }
        }
        Ok(star)
    }

    fn step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        let mut star = self.unnormalized_step(u)?;
        let norm = (self.grid.h() * star.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroMass);
        }
        let scale = self.cfg.mass_a / norm;
        for v in &mut star {
            *v *= scale;
        }
        Ok(star)
    }
}

/// One flow step followed by renormalization to `cfg.mass_a`.
pub fn cngf_step(u: &GridFunction, cfg: &CngfConfig, epsilon: f64) -> Result<GridFunction> {
    let mut stepper = Stepper::new(*u.grid(), *cfg, epsilon, 1.0)?;
    let next = stepper.step(u.values())?;
    Ok(GridFunction::from_parts_unchecked(*u.grid(), next))
}

/// Runs the flow from `init` (rescaled to `cfg.mass_a` first) until the change rate drops below
/// `cfg.conv_tol` or `cfg.max_steps` is reached. Running out of steps is reported through
/// `converged = false`, not as an error.
pub fn run_cngf(init: &GridFunction, cfg: &CngfConfig, epsilon: f64) -> Result<CngfResult> {
    run_cngf_observed(init, cfg, epsilon, |_| {})
}

/// [`run_cngf`] with a callback after every step.
pub fn run_cngf_observed(
    init: &GridFunction,
    cfg: &CngfConfig,
    epsilon: f64,
    observe: impl FnMut(&StepReport<'_>),
) -> Result<CngfResult> {
    run_with_delta_sign(init, cfg, epsilon, 1.0, observe)
}

/// The flow with the delta term multiplied by `delta_sign` inside the solver (energy and
/// eigenvalue keep the true sign). `-1` is the sign-error mutant used by the validation suite.
pub(crate) fn run_with_delta_sign(
    init: &GridFunction,
    cfg: &CngfConfig,
    epsilon: f64,
    delta_sign: f64,
    mut observe: impl FnMut(&StepReport<'_>),
) -> Result<CngfResult> {
    let grid = *init.grid();
    let mut stepper = Stepper::new(grid, *cfg, epsilon, delta_sign)?;
    let mut u = init.normalized(cfg.mass_a)?;
    let mut e_prev = energy(&u, epsilon);
    let mut max_rise = f64::NEG_INFINITY;
    let mut change = f64::INFINITY;
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        let next = stepper.step(u.values())?;
        steps += 1;
        change = u.max_abs_diff(&next) / cfg.dt;
        u = GridFunction::from_parts_unchecked(grid, next);
        let e = energy(&u, epsilon);
        max_rise = max_rise.max(e - e_prev);
        e_prev = e;
        observe(&StepReport {
            step: steps,
            profile: u.values(),
            change,
            energy: e,
        });
        if change < cfg.conv_tol {
            converged = true;
            break;
        }
    }
    Ok(CngfResult {
        extracted_k: extracted_k(&u, epsilon)?,
        energy: e_prev,
        steps_taken: steps,
        converged,
        final_change: change,
        max_energy_increase: max_rise,
        profile: u,
    })
}

/// Gaussian `exp(-x^2 / (2 width^2))` rescaled to `mass_a`.
pub fn default_initial_guess(grid: &Grid, mass_a: f64, width: f64) -> Result<GridFunction> {
    if !(width > 0.0) {
        return Err(Error::out_of_range("width", "(0, inf)", width));
    }
    let two_w2 = 2.0 * width * width;
    GridFunction::from_fn(*grid, |x| (-x * x / two_w2).exp())?.normalized(mass_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{Branch, ClosedFormProfile, CouplingStrength, SolitonSpec};

    fn exact_on(grid: &Grid, e: f64, k: f64, b: Branch) -> (GridFunction, SolitonSpec) {
        let spec = SolitonSpec::new(CouplingStrength::new(e).unwrap(), k, b).unwrap();
        let p = ClosedFormProfile::new(spec).unwrap();
        (GridFunction::from_fn(*grid, |x| p.value(x)).unwrap(), spec)
    }

    #[test]
    fn energy_of_zero_and_delta_term() {
        let g = Grid::new(-5.0, 5.0, 100).unwrap();
        assert_eq!(energy(&GridFunction::zeros(g), 1.0), 0.0);
        let u = GridFunction::from_fn(g, |x| (-x * x).exp()).unwrap();
        let diff = energy(&u, 0.7) - energy(&u, 0.0);
        assert!((diff + 0.35 * u.at_origin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn extracted_k_rejects_zero() {
        let g = Grid::new(-5.0, 5.0, 100).unwrap();
        assert_eq!(
            extracted_k(&GridFunction::zeros(g), 1.0),
            Err(Error::ZeroMass)
        );
    }

    #[test]
    fn extracted_k_on_exact_profile() {
        let g = Grid::benchmark();
        for (e, k, b) in [
            (0.5, 0.5, Branch::Lower),
            (1.0, 0.9, Branch::Upper),
            (1.5, 0.9, Branch::Lower),
        ] {
            let (u, _) = exact_on(&g, e, k, b);
            assert!((extracted_k(&u, e).unwrap() - k).abs() < 5e-3);
        }
    }

    #[test]
    fn initial_guess() {
        let g = Grid::new(-10.0, 10.0, 400).unwrap();
        let u = default_initial_guess(&g, 1.7, 2.0).unwrap();
        assert!((u.mass() - 1.7).abs() < 1e-14);
        assert_eq!(u.asymmetry(), 0.0);
        let narrow = default_initial_guess(&g, 1.0, 0.2).unwrap();
        let wide = default_initial_guess(&g, 1.0, 50.0).unwrap();
        assert!(narrow.at_origin() > 5.0 * wide.at_origin());
        let v = wide.values();
        assert!(v[100] / v[200] > 0.99);
        assert!(default_initial_guess(&g, 1.0, 0.0).is_err());
    }

    #[test]
    fn step_preserves_mass() {
        let g = Grid::benchmark();
        let u = default_initial_guess(&g, 1.3, 3.0).unwrap();
        for jump in [JumpDiscretization::Lumped, JumpDiscretization::Eliminated] {
            let cfg = CngfConfig {
                jump,
                ..CngfConfig::new(1.3)
            };
            let next = cngf_step(&u, &cfg, 0.8).unwrap();
            assert!((next.mass() - 1.3).abs() < 1e-12);
        }
    }

    #[test]
    fn step_near_fixed_point_for_exact_profile() {
        let g = Grid::benchmark();
        let (u, _) = exact_on(&g, 0.5 * 3f64.sqrt(), 0.5, Branch::Lower);
        let cfg = CngfConfig::new(u.mass());
        let next = cngf_step(&u, &cfg, 0.5 * 3f64.sqrt()).unwrap();
        assert!(next.max_abs_diff(u.values()) < 1e-5);
    }

    #[test]
    fn zero_state_cannot_be_renormalized() {
        let g = Grid::new(-5.0, 5.0, 100).unwrap();
        let cfg = CngfConfig::new(1.0);
        assert_eq!(
            cngf_step(&GridFunction::zeros(g), &cfg, 0.0),
            Err(Error::ZeroMass)
        );
        assert_eq!(
            run_cngf(&GridFunction::zeros(g), &cfg, 0.0).unwrap_err(),
            Error::ZeroMass
        );
    }

    #[test]
    fn oversized_step_is_rejected() {
        let g = Grid::benchmark();
        let (u, _) = exact_on(&g, 1.0, 0.9, Branch::Upper);
        let cfg = CngfConfig {
            dt: 100.0,
            ..CngfConfig::new(u.mass())
        };
        match cngf_step(&u, &cfg, 1.0) {
            Err(Error::SingularSystem { .. }) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn eliminated_scheme_reconstructs_jump() {
        let g = Grid::new(-20.0, 20.0, 800).unwrap();
        let u = default_initial_guess(&g, 1.0, 2.0).unwrap();
        let cfg = CngfConfig {
            jump: JumpDiscretization::Eliminated,
            ..CngfConfig::new(1.0)
        };
        let e = 0.9;
        let next = cngf_step(&u, &cfg, e).unwrap();
        let j0 = g.origin();
        let v = next.values();
        let ratio = 1.0 - 0.5 * g.h() * e;
        assert!((v[j0 + 1] - ratio * v[j0]).abs() < 1e-14);
        assert_eq!(v[j0 + 1], v[j0 - 1]);
        assert_eq!(next.asymmetry(), 0.0);
    }

    #[test]
    fn short_run_descends_and_keeps_mass() {
        let g = Grid::new(-20.0, 20.0, 800).unwrap();
        let init = default_initial_guess(&g, 1.2, 3.0).unwrap();
        let cfg = CngfConfig {
            dt: 1e-3,
            max_steps: 3000,
            ..CngfConfig::new(1.2)
        };
        let mut worst_mass = 0.0f64;
        let res = run_cngf_observed(&init, &cfg, 0.9, |r| {
            let m = (g.h() * r.profile.iter().map(|v| v * v).sum::<f64>()).sqrt();
            worst_mass = worst_mass.max((m - 1.2).abs());
        })
        .unwrap();
        assert!(worst_mass < 1e-12);
        assert!(
            res.max_energy_increase <= 1e-10,
            "{}",
            res.max_energy_increase
        );
        assert_eq!(res.profile.asymmetry(), 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = Grid::new(-20.0, 20.0, 800).unwrap();
        let init = default_initial_guess(&g, 1.2, 3.0).unwrap();
        let cfg = CngfConfig {
            max_steps: 5,
            ..CngfConfig::new(1.2)
        };
        let res = run_cngf(&init, &cfg, 0.9).unwrap();
        assert!(!res.converged);
        assert_eq!(res.steps_taken, 5);
        assert!(res.final_change > cfg.conv_tol);
    }

    #[test]
    fn config_validation() {
        assert!(CngfConfig {
            dt: 0.0,
            ..CngfConfig::new(1.0)
        }
        .validate()
        .is_err());
        assert!(CngfConfig::new(-1.0).validate().is_err());
        assert!(CngfConfig {
            max_steps: 0,
            ..CngfConfig::new(1.0)
        }
        .validate()
        .is_err());
        let json = r#"{"dt":0.001,"mass_a":1.5,"max_steps":10,"conv_tol":1e-8}"#;
        let cfg: CngfConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.jump, JumpDiscretization::Lumped);
    }
}
