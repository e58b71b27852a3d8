//! Self-check suite behind `cq-soliton validate`: each check measures one invariant of the
//! exact solutions, the curve, the flow or the spectrum and compares it with a tolerance.

use rayon::prelude::*;
use serde::Serialize;

use crate::bifurcation::{mass_sq_slope, mass_squared, mass_squared_by_quadrature, trace_curve};
use crate::closed_form::{
    fold_point, Branch, ClosedFormProfile, CouplingStrength, Side, SolitonSpec,
};
use crate::error::Result;
use crate::gradient_flow::{self, default_initial_guess, extracted_k, CngfConfig};
use crate::grid::{Grid, GridFunction};
use crate::spectrum::{
    assemble_operator, assemble_with_profile, f_integral, fold_kernel_check, lowest_eigenvalues,
    morse_index_of,
};
use crate::tridiag;

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the delta term inside the gradient-flow solver.
    JumpSign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    /// How `measured` is compared with `tolerance`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    fn below(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            measured,
            tolerance,
            relation: "<",
            passed: measured < tolerance,
        }
    }

    fn above(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            measured,
            tolerance,
            relation: ">",
            passed: measured > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

fn eps(s: f64) -> CouplingStrength {
    CouplingStrength::from_sqrt3_fraction(s).expect("fraction in (0, 1)")
}

fn sample_specs() -> Result<Vec<SolitonSpec>> {
    let mut out = vec![];
    for s in [0.1, 0.5, 0.9] {
        let e = eps(s);
        let (lo, kb) = (e.bifurcation_point(), fold_point(e));
        for t in [0.25, 0.75] {
            out.push(SolitonSpec::new(e, lo + (0.75 - lo) * t, Branch::Lower)?);
            out.push(SolitonSpec::new(e, 0.75 + (kb - 0.75) * t, Branch::Lower)?);
            out.push(SolitonSpec::new(e, 0.75 + (kb - 0.75) * t, Branch::Upper)?);
        }
        out.push(SolitonSpec::front(e));
        out.push(SolitonSpec::fold(e));
    }
    Ok(out)
}

fn max_over<T>(items: &[T], f: impl Fn(&T) -> Result<f64> + Sync + Send) -> Result<f64>
where
    T: Sync,
{
    items
        .par_iter()
        .map(f)
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

fn ode_residual(specs: &[SolitonSpec]) -> Result<Check> {
    let d = 1e-4;
    let worst = max_over(specs, |sp| {
        let p = ClosedFormProfile::new(*sp)?;
        let k = sp.k();
        Ok([0.2, 0.9, 2.0, 5.0, -1.5]
            .iter()
            .map(|&x: &f64| {
                let (xp, xm) = (x + d, x - d);
                let (dp, dm) = (xp - x, x - xm);
                let u = p.value(x);
                let upp = 2.0 * ((p.value(xp) - u) / dp - (u - p.value(xm)) / dm) / (dp + dm);
                (upp - k * u + 2.0 * u.powi(3) - u.powi(5)).abs()
            })
            .fold(0.0, f64::max))
    })?;
    Ok(Check::below(
        "exact profiles solve the ODE (finite differences)",
        worst,
        1e-7,
    ))
}

fn jump_condition(specs: &[SolitonSpec]) -> Result<Check> {
    let worst = max_over(specs, |sp| {
        let p = ClosedFormProfile::new(*sp)?;
        let half = 0.5 * sp.epsilon().value() * p.value(0.0);
        let r = p.derivative_at_origin(Side::Right)?;
        let l = p.derivative_at_origin(Side::Left)?;
        Ok((r + half).abs().max((l - half).abs()))
    })?;
    Ok(Check::below(
        "exact profiles satisfy the jump condition",
        worst,
        1e-9,
    ))
}

fn first_integral(specs: &[SolitonSpec]) -> Result<Check> {
    let worst = max_over(specs, |sp| {
        let p = ClosedFormProfile::new(*sp)?;
        [0.0, 0.4, 1.3, 3.0, 8.0]
            .iter()
            .map(|&x| p.first_integral_residual(x).map(f64::abs))
            .try_fold(0.0, |m, r| r.map(|r| f64::max(m, r)))
    })?;
    Ok(Check::below(
        "first integral vanishes along exact profiles",
        worst,
        1e-10,
    ))
}

fn evenness(specs: &[SolitonSpec]) -> Result<Check> {
    let worst = max_over(specs, |sp| {
        let p = ClosedFormProfile::new(*sp)?;
        Ok([0.1, 0.7, 2.2, 9.0]
            .iter()
            .map(|&x: &f64| (p.value(x) - p.value(-x)).abs())
            .fold(0.0, f64::max))
    })?;
    Ok(Check::below("exact profiles are even", worst, 1e-300))
}

fn closed_form_mass() -> Result<Check> {
    let mut specs = vec![];
    for s in [0.1, 0.5, 0.9] {
        let e = eps(s);
        let lo = e.bifurcation_point();
        for t in [0.1, 0.5, 0.9] {
            specs.push(SolitonSpec::new(e, lo + (0.75 - lo) * t, Branch::Lower)?);
        }
    }
    let worst = max_over(&specs, |sp| {
        Ok((mass_squared(sp)? - mass_squared_by_quadrature(sp)?.value).abs())
    })?;
    Ok(Check::below(
        "closed-form mass matches quadrature",
        worst,
        1e-8,
    ))
}

fn slope_vs_differences() -> Result<Check> {
    let mut jobs = vec![];
    for s in [0.1, 0.5, 0.9] {
        let e = eps(s);
        let kb = fold_point(e);
        for b in [Branch::Lower, Branch::Upper] {
            for t in [0.3, 0.7] {
                jobs.push((e, 0.75 + (kb - 0.75) * t, b, 1e-3 * (kb - 0.75)));
            }
        }
        let lo = e.bifurcation_point();
        jobs.push((e, lo + (0.75 - lo) * 0.5, Branch::Lower, 1e-3 * (0.75 - lo)));
    }
    let worst = max_over(&jobs, |&(e, k, b, dk)| {
        let m = |kk| -> Result<f64> {
            Ok(mass_squared_by_quadrature(&SolitonSpec::new(e, kk, b)?)?.value)
        };
        let fd = (m(k + dk)? - m(k - dk)?) / (2.0 * dk);
        let exact = mass_sq_slope(&SolitonSpec::new(e, k, b)?)?;
        Ok(((fd - exact) / exact).abs())
    })?;
    Ok(Check::below(
        "exact mass slopes match differences of the mass",
        worst,
        1e-5,
    ))
}

fn curve_shape() -> Result<Vec<Check>> {
    let mut bad_folds = 0.0;
    let mut min_step = f64::INFINITY;
    for s in [0.1, 0.5, 0.9] {
        let trace = trace_curve(eps(s), 120)?;
        let turns = trace.turning_points();
        if turns.len() != 1 || trace.samples[turns[0]].branch != Branch::Fold {
            bad_folds += 1.0;
        }
        for w in trace.samples.windows(2) {
            min_step = min_step.min(w[1].mass - w[0].mass);
        }
    }
    Ok(vec![
        Check::below(
            "traced curves turn exactly once, at the fold",
            bad_folds,
            0.5,
        ),
        Check::above("mass increases along the curve", min_step, 0.0),
    ])
}

/// Short flow on a coarse box from a skewed start: mass, descent, evenness from even data and
/// the discrete jump condition at convergence.
fn flow_checks(fault: Option<Fault>) -> Result<Vec<Check>> {
    let grid = Grid::new(-20.0, 20.0, 800)?;
    let e = eps(0.5);
    let spec = SolitonSpec::new(e, 0.6, Branch::Lower)?;
    let a = mass_squared(&spec)?.sqrt();
    let sign = if fault == Some(Fault::JumpSign) {
        -1.0
    } else {
        1.0
    };

    let cfg = CngfConfig {
        dt: 1e-3,
        max_steps: 1500,
        ..CngfConfig::new(a)
    };
    let init = default_initial_guess(&grid, a, 2.5)?;
    let (mut mass_err, mut asym) = (0.0f64, 0.0f64);
    let transient = gradient_flow::run_with_delta_sign(&init, &cfg, e.value(), sign, |r| {
        let h = grid.h();
        let m = (h * r.profile.iter().map(|v| v * v).sum::<f64>()).sqrt();
        mass_err = mass_err.max((m - a).abs());
        let j0 = grid.origin();
        for m in 1..=j0.min(grid.intervals() - j0) {
            asym = asym.max((r.profile[j0 + m] - r.profile[j0 - m]).abs());
        }
    })?;

    // converge from the exact profile (few hundred steps at a large time step)
    let exact = {
        let p = ClosedFormProfile::new(spec)?;
        GridFunction::from_fn(grid, |x| p.value(x))?
    };
    let cfg = CngfConfig {
        dt: 0.05,
        max_steps: 20_000,
        conv_tol: 1e-9,
        ..CngfConfig::new(a)
    };
    let done = gradient_flow::run_with_delta_sign(&exact, &cfg, e.value(), sign, |_| {})?;
    let v = done.profile.values();
    let (h, j0) = (grid.h(), grid.origin());
    let jump = (v[j0 + 1] - v[j0]) / h - (v[j0] - v[j0 - 1]) / h;
    // relative to the jump itself; O(h) for the lumped delta, about 2 for a flipped sign
    let jump_defect = (jump + e.value() * v[j0]).abs() / (e.value() * v[j0].abs());
    let k_err = (extracted_k(&done.profile, e.value())? - spec.k()).abs();

    Ok(vec![
        Check::below("flow iterates keep the prescribed mass", mass_err, 1e-12),
        Check::below(
            "flow energy does not increase",
            transient.max_energy_increase,
            1e-10,
        ),
        Check::below("flow keeps even data even", asym, 1e-300),
        Check::below(
            "converged flow satisfies the discrete jump condition",
            jump_defect,
            2.0 * h,
        ),
        Check::below("converged flow recovers k", k_err, 1e-2),
    ])
}

fn laplacian_oracle() -> Result<Check> {
    let grid = Grid::new(-10.0, 10.0, 400)?;
    let k = 0.4;
    let op = assemble_with_profile(&grid, 0.0, k, None)?;
    let ev = lowest_eigenvalues(&op, 5)?;
    let h = grid.h();
    let worst = ev
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let s = ((j + 1) as f64 * std::f64::consts::PI * h / (2.0 * grid.length())).sin();
            (l - (k + 4.0 / (h * h) * s * s)).abs()
        })
        .fold(0.0, f64::max);
    Ok(Check::below(
        "eigensolver reproduces the discrete Laplacian spectrum",
        worst,
        1e-10,
    ))
}

fn sturm_consistency() -> Result<Check> {
    let grid = Grid::benchmark();
    let mut mismatches = 0.0;
    for s in [0.1, 0.5, 0.9] {
        let e = eps(s);
        let spec = SolitonSpec::new(
            e,
            e.bifurcation_point() + 0.3 * (0.75 - e.bifurcation_point()),
            Branch::Lower,
        )?;
        let op = assemble_operator(&spec, &grid)?;
        let ev = lowest_eigenvalues(&op, 5)?;
        for probe in [-0.5, -1e-3, 1e-3, 0.5 * spec.k()] {
            let listed = ev.iter().filter(|&&l| l < probe).count();
            if listed < ev.len() && listed != op.count_below(probe) {
                mismatches += 1.0;
            }
        }
    }
    Ok(Check::below(
        "Sturm counts agree with the computed eigenvalues",
        mismatches,
        0.5,
    ))
}

fn delta_well() -> Result<Check> {
    let grid = Grid::benchmark();
    let mut worst = 0.0f64;
    for s in [0.1, 0.5, 0.9] {
        let e = eps(s).value();
        let k = 0.5;
        let op = assemble_with_profile(&grid, e, k, None)?;
        worst = worst.max((lowest_eigenvalues(&op, 1)?[0] - (k - e * e / 4.0)).abs());
    }
    Ok(Check::below(
        "delta well ground state k - eps^2/4",
        worst,
        5e-3,
    ))
}

fn morse_constancy() -> Result<Check> {
    let grid = Grid::benchmark();
    let e = eps(0.5);
    let (lo, kb) = (e.bifurcation_point(), fold_point(e));
    let mut jobs = vec![];
    for i in 0..20 {
        let t = 0.02 + 0.96 * i as f64 / 19.0;
        jobs.push((
            SolitonSpec::new(e, lo + (kb - 1e-3 - lo) * t, Branch::Lower)?,
            1usize,
        ));
        jobs.push((
            SolitonSpec::new(e, 0.75 + (kb - 1e-3 - 0.75) * t, Branch::Upper)?,
            0usize,
        ));
    }
    let wrong: usize = jobs
        .par_iter()
        .map(|(sp, want)| -> Result<usize> {
            Ok(usize::from(
                morse_index_of(&assemble_operator(sp, &grid)?) != *want,
            ))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(Check::below(
        "Morse index constant along each branch (1 lower, 0 upper)",
        wrong as f64,
        0.5,
    ))
}

fn spectral_convergence() -> Result<Check> {
    let e = eps(0.5);
    let spec = SolitonSpec::new(e, 0.6, Branch::Lower)?;
    let grids = [
        Grid::new(-40.0, 40.0, 1600)?,
        Grid::new(-40.0, 40.0, 3200)?,
        Grid::new(-40.0, 40.0, 6400)?,
    ];
    let ev: Vec<Vec<f64>> = grids
        .iter()
        .map(|g| lowest_eigenvalues(&assemble_operator(&spec, g)?, 3))
        .collect::<Result<_>>()?;
    let worst = (0..3)
        .map(|i| (ev[0][i] - ev[1][i]).abs() / (ev[1][i] - ev[2][i]).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(Check::above(
        "lowest eigenvalues converge at second order (ratio under halving)",
        worst,
        3.0,
    ))
}

fn continuous_floor() -> Result<Check> {
    // the lowest box mode above k (the bound states lie below k) sits just above k and approaches it as the box grows
    let e = eps(0.5);
    let spec = SolitonSpec::new(e, 0.6, Branch::Lower)?;
    let gaps: Vec<f64> = [(40.0, 3200), (80.0, 6400)]
        .iter()
        .map(|&(l, n)| {
            let op = assemble_operator(&spec, &Grid::new(-l, l, n)?)?;
            let ev = lowest_eigenvalues(&op, 6)?;
            Ok(ev
                .iter()
                .copied()
                .find(|&x| x > spec.k())
                .unwrap_or(f64::NAN)
                - spec.k())
        })
        .collect::<Result<_>>()?;
    let shrinks = gaps[0] > 0.0 && gaps[1] > 0.0 && gaps[1] < gaps[0];
    Ok(Check::below(
        "continuous-spectrum edge approaches k as the box grows",
        if shrinks { gaps[1] } else { f64::INFINITY },
        0.01,
    ))
}

fn fold_checks() -> Result<Vec<Check>> {
    let grid = Grid::benchmark();
    let mut gap = 0.0f64;
    let mut overlap = 1.0f64;
    let mut f_min = f64::INFINITY;
    for s in [0.1, 0.5, 0.9] {
        let r = fold_kernel_check(eps(s), &grid)?;
        gap = gap.max(r.eigenvalues[0].abs());
        overlap = overlap.min(r.kernel_overlap.unwrap_or(0.0));
        f_min = f_min.min(f_integral(eps(s))?);
    }
    Ok(vec![
        Check::below(
            "fold eigenvalue vanishes to discretization accuracy",
            gap,
            1e-2,
        ),
        Check::above("fold eigenvector is |u'|", overlap, 0.999),
        Check::above("f(eps) is positive", f_min, 0.0),
    ])
}

fn eigenvector_residual() -> Result<Check> {
    let grid = Grid::new(-20.0, 20.0, 800)?;
    let spec = SolitonSpec::new(eps(0.5), 0.9, Branch::Upper)?;
    let op = assemble_operator(&spec, &grid)?;
    let l = lowest_eigenvalues(&op, 1)?[0];
    let v = tridiag::eigenvector(&op.diagonal, &op.off_diagonal, l);
    let av = op.apply(&v);
    let resid = av
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - l * b).abs())
        .fold(0.0, f64::max);
    Ok(Check::below(
        "inverse iteration returns an eigenvector",
        resid,
        1e-6,
    ))
}

/// Runs every check; `fault` injects a defect that some check must catch.
pub fn run_suite(fault: Option<Fault>) -> Result<ValidationReport> {
    let specs = sample_specs()?;
    type Job<'a> = Box<dyn Fn() -> Result<Vec<Check>> + Send + Sync + 'a>;
    let single = |c: Result<Check>| c.map(|c| vec![c]);
    let specs_ref = &specs;
    let jobs: Vec<Job<'_>> = vec![
        Box::new(move || single(ode_residual(specs_ref))),
        Box::new(move || single(jump_condition(specs_ref))),
        Box::new(move || single(first_integral(specs_ref))),
        Box::new(move || single(evenness(specs_ref))),
        Box::new(move || single(closed_form_mass())),
        Box::new(move || single(slope_vs_differences())),
        Box::new(curve_shape),
        Box::new(move || flow_checks(fault)),
        Box::new(move || single(laplacian_oracle())),
        Box::new(move || single(sturm_consistency())),
        Box::new(move || single(eigenvector_residual())),
        Box::new(move || single(delta_well())),
        Box::new(move || single(morse_constancy())),
        Box::new(move || single(spectral_convergence())),
        Box::new(move || single(continuous_floor())),
        Box::new(fold_checks),
    ];
    let groups: Vec<Vec<Check>> = jobs.par_iter().map(|j| j()).collect::<Result<_>>()?;
    let checks: Vec<Check> = groups.into_iter().flatten().collect();
    let passed = checks.iter().filter(|c| c.passed).count();
    let failed = checks.len() - passed;
    Ok(ValidationReport {
        checks,
        passed,
        failed,
        all_passed: failed == 0,
    })
}
