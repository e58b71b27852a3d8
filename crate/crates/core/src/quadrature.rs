//! Globally adaptive Gauss–Kronrod (7/15) quadrature, plus semi-infinite integrals of
//! exponentially decaying integrands with a bounded truncation error.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Estimated error of the finite part.
    pub error: f64,
    /// Bound on the neglected tail (zero for finite intervals).
    pub tail_bound: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[breakpoints[0], breakpoints.last()]`, starting from the panels defined
/// by the breakpoints and bisecting the worst panel until the summed error estimate is below
/// `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], tol: f64) -> Result<Quadrature> {
    if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "quadrature breakpoints must be strictly increasing".into(),
        ));
    }
    let mut panels: Vec<Panel> = breakpoints
        .windows(2)
        .map(|w| gauss_kronrod(&f, w[0], w[1]))
        .collect();
    let mut evaluations = 15 * panels.len();
    loop {
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= tol {
            break;
        }
        if panels.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(error));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // panel cannot be split further in floating point
            return Err(Error::Quadrature(error));
        }
        panels.push(gauss_kronrod(&f, p.a, mid));
        panels.push(gauss_kronrod(&f, mid, p.b));
        evaluations += 30;
    }
    // sum small panels first
    panels.sort_by(|x, y| x.value.abs().total_cmp(&y.value.abs()));
    Ok(Quadrature {
        value: panels.iter().map(|p| p.value).sum(),
        error: panels.iter().map(|p| p.error).sum(),
        tail_bound: 0.0,
        evaluations,
    })
}

/// Integrates `f` over `[breakpoints[0], inf)` for an integrand with `|f(x)| <= |f(X)| e^{-rate (x - X)}`
/// beyond the last breakpoint.
///
/// The cut-off is pushed outward from the last breakpoint until the tail bound `|f(X)| / rate`
/// falls below `tail_tol`.
pub fn integrate_exponential_tail<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    rate: f64,
    tol: f64,
    tail_tol: f64,
) -> Result<Quadrature> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "decay rate must be positive, got {rate}"
        )));
    }
    let mut points = breakpoints.to_vec();
    let mut cutoff = *points
        .last()
        .ok_or_else(|| Error::InvalidArgument("quadrature needs at least one breakpoint".into()))?;
    let step = 10.0 / rate;
    let mut tail = f64::INFINITY;
    for _ in 0..200 {
        tail = f(cutoff)
            .abs()
            .max(f(cutoff + step).abs() * (rate * step).exp())
            / rate;
        if tail <= tail_tol {
            break;
        }
        cutoff += step;
        points.push(cutoff);
    }
    if tail > tail_tol {
        return Err(Error::Quadrature(tail));
    }
    let mut q = integrate(f, &points, tol)?;
    q.tail_bound = tail;
    Ok(q)
}

/// `n + 1` equally spaced breakpoints on `[a, b]`.
pub fn uniform_breakpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        })
        .collect()
}
