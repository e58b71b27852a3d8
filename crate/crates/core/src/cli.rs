//! Command-line front end: argument parsing, run configuration files and CSV/JSON output.
//!
//! Exit codes: 0 success (a flow that ran out of steps included), 1 failed validation checks,
//! 2 usage or configuration errors, 3 numerical failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bifurcation::{self, BifurcationSample};
use crate::closed_form::{Branch, ClosedFormProfile, CouplingStrength, Side, SolitonSpec};
use crate::error::{Error, Result};
use crate::gradient_flow::{self, CngfConfig, JumpDiscretization};
use crate::grid::{Grid, GridFunction};
use crate::spectrum::{self, SpectrumReport, StabilityVerdict};
use crate::validate::{self, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CQ_SOLITON_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "cq-soliton",
    version,
    about = "Bound states of the cubic-quintic NLS equation with an attractive delta potential"
)]
pub struct Cli {
    /// Output format (defaults to csv; `validate` defaults to a text report).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write output to this file instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct GridArgs {
    /// Left end of the computational box.
    #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
    pub x_min: f64,
    /// Right end of the computational box.
    #[arg(long, default_value_t = 40.0)]
    pub x_max: f64,
    /// Number of grid intervals.
    #[arg(long, default_value_t = 3200)]
    pub intervals: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, self.intervals)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate an exact profile: x, u, u', first-integral residual.
    Exact {
        /// Coupling: a number, `sqrt3`, or `s*sqrt3`.
        #[arg(long, value_parser = parse_coupling)]
        eps: CouplingStrength,
        #[arg(long)]
        k: f64,
        #[arg(long, value_parser = parse_branch)]
        branch: Branch,
        /// Interval to sample.
        #[arg(long, num_args = 2, value_names = ["A", "B"], default_values_t = [-10.0, 10.0], allow_hyphen_values = true)]
        range: Vec<f64>,
        /// Number of sample points.
        #[arg(long, default_value_t = 801)]
        n: usize,
    },
    /// The mass-k curve: k, ||u||, d||u||^2/dk, branch. `--eps 0` gives the free-space curve.
    Bifurcation {
        #[arg(long, value_parser = parse_epsilon)]
        eps: f64,
        #[arg(long, default_value_t = 400)]
        n: usize,
    },
    /// Run the normalized gradient flow described by a JSON configuration file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Compare with the exact profile `(k, branch)`.
        #[arg(long, num_args = 2, value_names = ["K", "BRANCH"])]
        compare_exact: Option<Vec<String>>,
    },
    /// Lowest eigenvalues and Morse index of the linearization.
    Spectrum {
        #[arg(long, value_parser = parse_coupling)]
        eps: CouplingStrength,
        /// Propagation constant (ignored with --fold).
        #[arg(long, required_unless_present = "fold")]
        k: Option<f64>,
        #[arg(long, value_parser = parse_branch, required_unless_present = "fold")]
        branch: Option<Branch>,
        /// Number of eigenvalues (at most 10).
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Linearize at the fold and report the kernel overlap.
        #[arg(long)]
        fold: bool,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Orbital-stability verdict for one bound state.
    Stability {
        #[arg(long, value_parser = parse_coupling)]
        eps: CouplingStrength,
        #[arg(long)]
        k: f64,
        #[arg(long, value_parser = parse_branch)]
        branch: Branch,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run the built-in invariant checks.
    Validate {
        /// Deliberately break part of the solver to see the checks fail.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    JumpSign,
}

/// Parses `0.3`, `sqrt3`, `sqrt(3)`, `0.5*sqrt3` or `0.5*sqrt(3)`.
pub fn parse_epsilon(text: &str) -> std::result::Result<f64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let t = t.to_ascii_lowercase();
    let root = ["*sqrt(3)", "*sqrt3", "sqrt(3)", "sqrt3"]
        .iter()
        .find_map(|suffix| t.strip_suffix(suffix));
    let value = match root {
        Some("") => 3f64.sqrt(),
        Some(factor) => {
            let s: f64 = factor
                .parse()
                .map_err(|_| format!("cannot read '{factor}' in '{text}' as a number"))?;
            s * 3f64.sqrt()
        }
        None => t
            .parse()
            .map_err(|_| format!("cannot read '{text}' as a coupling"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("coupling '{text}' is not finite"))
    }
}

fn parse_coupling(text: &str) -> std::result::Result<CouplingStrength, String> {
    CouplingStrength::new(parse_epsilon(text)?).map_err(|e| e.to_string())
}

fn parse_branch(text: &str) -> std::result::Result<Branch, String> {
    text.parse::<Branch>().map_err(|e| e.to_string())
}

/// Coupling in a configuration file: a number or the `s*sqrt3` shorthand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonValue {
    Number(f64),
    Text(String),
}

impl EpsilonValue {
    pub fn value(&self) -> Result<f64> {
        match self {
            EpsilonValue::Number(v) => Ok(*v),
            EpsilonValue::Text(t) => parse_epsilon(t).map_err(Error::InvalidArgument),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(rename = "J")]
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub dt: f64,
    pub mass_a: f64,
    pub max_steps: usize,
    pub conv_tol: f64,
    #[serde(default)]
    pub jump: JumpDiscretization,
    /// Width of the Gaussian starting guess.
    #[serde(default = "default_init_width")]
    pub init_width: f64,
}

fn default_init_width() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

/// Contents of a `solve --config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub epsilon: EpsilonValue,
    pub grid: GridConfig,
    pub flow: FlowConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidArgument(format!("cannot read configuration {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon.value()?;
        if !(0.0..3f64.sqrt()).contains(&eps) {
            return Err(Error::InvalidCoupling(eps));
        }
        self.grid()?;
        self.cngf().validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.x_min, self.grid.x_max, self.grid.intervals)
    }

    pub fn cngf(&self) -> CngfConfig {
        CngfConfig {
            dt: self.flow.dt,
            mass_a: self.flow.mass_a,
            max_steps: self.flow.max_steps,
            conv_tol: self.flow.conv_tol,
            jump: self.flow.jump,
        }
    }
}

/// Full round-trip formatting used for every number written.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn to_json(value: &impl Serialize) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))
}

fn write_output(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            // a closed pipe is not worth an error
            let _ = stdout.write_all(text.as_bytes());
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct ExactRow {
    x: f64,
    u: f64,
    du: f64,
    residual: f64,
}

fn cmd_exact(
    eps: CouplingStrength,
    k: f64,
    branch: Branch,
    range: &[f64],
    n: usize,
    format: Format,
) -> Result<String> {
    let spec = bifurcation::curve_point(eps, k, branch)?;
    let (a, b) = (range[0], range[1]);
    if !(a < b) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need A < B and at least 2 points, got [{a}, {b}] with {n}"
        )));
    }
    let p = ClosedFormProfile::new(spec)?;
    let (center, half) = (0.5 * (a + b), 0.5 * (b - a));
    let last = (n - 1) as f64;
    let rows = (0..n)
        .map(|i| {
            // offsets from the centre are exact negatives for mirrored indices
            let x = center + half * ((2 * i) as f64 - last) / last;
            let du = if x == 0.0 {
                p.derivative_at_origin(Side::Right)?
            } else {
                p.derivative(x)?
            };
            Ok(ExactRow {
                x,
                u: p.value(x),
                du,
                residual: p.first_integral_residual(x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match format {
        Format::Csv => Ok(csv_table(
            &["x", "u", "du", "residual"],
            rows.iter()
                .map(|r| vec![num(r.x), num(r.u), num(r.du), num(r.residual)]),
        )),
        Format::Json => to_json(&json!({
            "epsilon": eps.value(),
            "k": spec.k(),
            "branch": spec.branch(),
            "rows": rows,
        })),
    }
}

fn cmd_bifurcation(eps: f64, n: usize, format: Format) -> Result<String> {
    let samples: Vec<BifurcationSample> = if eps == 0.0 {
        bifurcation::trace_free_space(n)?
    } else {
        let e = CouplingStrength::new(eps)?;
        bifurcation::trace_curve(e, n)?.samples
    };
    match format {
        Format::Csv => Ok(csv_table(
            &["k", "mass", "slope", "branch"],
            samples.iter().map(|s| {
                vec![
                    num(s.k),
                    num(s.mass),
                    opt_num(s.mass_sq_slope),
                    s.branch.to_string(),
                ]
            }),
        )),
        Format::Json => to_json(&json!({ "epsilon": eps, "samples": samples })),
    }
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    config: &'a RunConfig,
    converged: bool,
    steps_taken: usize,
    final_change: f64,
    extracted_k: f64,
    energy: f64,
    max_energy_increase: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<ExactComparison>,
}

#[derive(Debug, Serialize)]
struct ExactComparison {
    k: f64,
    branch: Branch,
    max_error: f64,
    k_error: f64,
    u_exact: Vec<f64>,
}

fn parse_compare(args: &[String], eps: f64) -> Result<SolitonSpec> {
    let k: f64 = args[0]
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot read k = '{}'", args[0])))?;
    let branch: Branch = args[1].parse()?;
    bifurcation::curve_point(CouplingStrength::new(eps)?, k, branch)
}

fn cmd_solve(
    cfg: &RunConfig,
    compare: Option<&[String]>,
    format: Format,
) -> Result<(String, bool)> {
    let eps = cfg.epsilon.value()?;
    let grid = cfg.grid()?;
    let compare = compare.map(|c| parse_compare(c, eps)).transpose()?;
    let init = gradient_flow::default_initial_guess(&grid, cfg.flow.mass_a, cfg.flow.init_width)?;
    let res = gradient_flow::run_cngf(&init, &cfg.cngf(), eps)?;
    let exact = compare
        .map(|spec| -> Result<ExactComparison> {
            let p = ClosedFormProfile::new(spec)?;
            let u_exact = GridFunction::from_fn(grid, |x| p.value(x))?;
            Ok(ExactComparison {
                k: spec.k(),
                branch: spec.branch(),
                max_error: res.profile.max_abs_diff(u_exact.values()),
                k_error: (res.extracted_k - spec.k()).abs(),
                u_exact: u_exact.into_values(),
            })
        })
        .transpose()?;
    let out = SolveOutput {
        config: cfg,
        converged: res.converged,
        steps_taken: res.steps_taken,
        final_change: res.final_change,
        extracted_k: res.extracted_k,
        energy: res.energy,
        max_energy_increase: res.max_energy_increase,
        x: grid.nodes().collect(),
        u: res.profile.values().to_vec(),
        exact,
    };
    let text = match format {
        Format::Json => to_json(&out)?,
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "# converged={} steps_taken={} final_change={} extracted_k={} energy={}{}",
                out.converged,
                out.steps_taken,
                num(out.final_change),
                num(out.extracted_k),
                num(out.energy),
                out.exact
                    .as_ref()
                    .map(|e| format!(" max_error={} k_error={}", num(e.max_error), num(e.k_error)))
                    .unwrap_or_default()
            );
            let header: &[&str] = if out.exact.is_some() {
                &["x", "u", "u_exact"]
            } else {
                &["x", "u"]
            };
            s.push_str(&csv_table(
                header,
                (0..out.x.len()).map(|j| {
                    let mut row = vec![num(out.x[j]), num(out.u[j])];
                    if let Some(e) = &out.exact {
                        row.push(num(e.u_exact[j]));
                    }
                    row
                }),
            ));
            s
        }
    };
    Ok((text, res.converged))
}

#[derive(Debug, Serialize)]
struct SpectrumOutput {
    epsilon: f64,
    k: f64,
    branch: Branch,
    #[serde(flatten)]
    report: SpectrumReport,
}

fn cmd_spectrum(
    eps: CouplingStrength,
    k: Option<f64>,
    branch: Option<Branch>,
    m: usize,
    fold: bool,
    grid: &Grid,
    format: Format,
) -> Result<String> {
    let (spec, report) = if fold {
        let mut r = spectrum::fold_kernel_check(eps, grid)?;
        if m != r.eigenvalues.len() {
            let op = spectrum::assemble_operator(&SolitonSpec::fold(eps), grid)?;
            r.eigenvalues = spectrum::lowest_eigenvalues(&op, m)?;
        }
        (SolitonSpec::fold(eps), r)
    } else {
        let k = k.ok_or_else(|| Error::InvalidArgument("--k is required".into()))?;
        let b = branch.ok_or_else(|| Error::InvalidArgument("--branch is required".into()))?;
        let spec = bifurcation::curve_point(eps, k, b)?;
        let op = spectrum::assemble_operator(&spec, grid)?;
        (spec, spectrum::spectrum_report(&op, m)?)
    };
    let out = SpectrumOutput {
        epsilon: eps.value(),
        k: spec.k(),
        branch: spec.branch(),
        report,
    };
    match format {
        Format::Json => to_json(&out),
        Format::Csv => {
            let mut header = vec![
                "epsilon".to_string(),
                "k".into(),
                "branch".into(),
                "morse_index".into(),
                "zero_mode_gap".into(),
                "kernel_overlap".into(),
            ];
            header.extend((0..out.report.eigenvalues.len()).map(|i| format!("lambda_{i}")));
            let mut row = vec![
                num(out.epsilon),
                num(out.k),
                out.branch.to_string(),
                out.report.morse_index.to_string(),
                num(out.report.zero_mode_gap),
                opt_num(out.report.kernel_overlap),
            ];
            row.extend(out.report.eigenvalues.iter().map(|&l| num(l)));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            Ok(csv_table(&header, [row]))
        }
    }
}

#[derive(Debug, Serialize)]
struct StabilityOutput {
    epsilon: f64,
    k: f64,
    branch: Branch,
    #[serde(flatten)]
    verdict: StabilityVerdict,
}

fn cmd_stability(
    eps: CouplingStrength,
    k: f64,
    branch: Branch,
    grid: &Grid,
    format: Format,
) -> Result<String> {
    let spec = bifurcation::curve_point(eps, k, branch)?;
    let verdict = spectrum::classify_stability(&spec, grid)?;
    let out = StabilityOutput {
        epsilon: eps.value(),
        k: spec.k(),
        branch: spec.branch(),
        verdict,
    };
    match format {
        Format::Json => to_json(&out),
        Format::Csv => Ok(csv_table(
            &[
                "epsilon",
                "k",
                "branch",
                "stable",
                "mechanism",
                "morse_index",
                "slope",
            ],
            [vec![
                num(out.epsilon),
                num(out.k),
                out.branch.to_string(),
                out.verdict.stable.to_string(),
                out.verdict
                    .mechanism
                    .map(|m| format!("{m:?}"))
                    .unwrap_or_else(|| "none".into()),
                out.verdict.morse_index.to_string(),
                opt_num(out.verdict.slope),
            ]],
        )),
    }
}

fn cmd_validate(fault: Option<FaultArg>, format: Option<Format>) -> Result<(String, bool)> {
    let fault = fault.map(|f| match f {
        FaultArg::JumpSign => Fault::JumpSign,
    });
    let report = validate::run_suite(fault)?;
    let text = match format {
        Some(Format::Json) => to_json(&report)?,
        Some(Format::Csv) => csv_table(
            &["check", "measured", "relation", "tolerance", "passed"],
            report.checks.iter().map(|c| {
                vec![
                    format!("\"{}\"", c.name),
                    num(c.measured),
                    c.relation.to_string(),
                    num(c.tolerance),
                    c.passed.to_string(),
                ]
            }),
        ),
        None => {
            let mut s = String::new();
            for c in &report.checks {
                let _ = writeln!(
                    s,
                    "{} {}: {:.3e} {} {:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.relation,
                    c.tolerance
                );
            }
            let summary = json!({
                "passed": report.passed,
                "failed": report.failed,
                "all_passed": report.all_passed,
            });
            let _ = writeln!(s, "summary {summary}");
            s
        }
    };
    Ok((text, report.all_passed))
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let format = cli.format.unwrap_or_default();
    let path = cli.output.as_deref();
    let mut code = EXIT_OK;
    let text = match cli.command {
        Command::Exact {
            eps,
            k,
            branch,
            range,
            n,
        } => cmd_exact(eps, k, branch, &range, n, format)?,
        Command::Bifurcation { eps, n } => cmd_bifurcation(eps, n, format)?,
        Command::Solve {
            config,
            compare_exact,
        } => {
            let cfg = RunConfig::load(&config)?;
            let format = cli.format.unwrap_or(cfg.output.format);
            let (text, converged) = cmd_solve(&cfg, compare_exact.as_deref(), format)?;
            if !converged {
                eprintln!("warning: flow did not converge within max_steps");
            }
            let target = path.or(cfg.output.path.as_deref());
            write_output(&text, target)?;
            return Ok(EXIT_OK);
        }
        Command::Spectrum {
            eps,
            k,
            branch,
            m,
            fold,
            grid,
        } => cmd_spectrum(eps, k, branch, m, fold, &grid.grid()?, format)?,
        Command::Stability {
            eps,
            k,
            branch,
            grid,
        } => cmd_stability(eps, k, branch, &grid.grid()?, format)?,
        Command::Validate { inject_fault } => {
            let (text, ok) = cmd_validate(inject_fault, cli.format)?;
            if !ok {
                code = EXIT_VALIDATION_FAILED;
            }
            text
        }
    };
    write_output(&text, path)?;
    Ok(code)
}

/// Runs the program on the given arguments and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}
