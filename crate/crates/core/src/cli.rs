//! Command-line front end. [`run`] parses arguments, writes results to the
//! given streams and returns the process exit code: 0 on success, 1 when a
//! computation fails or a bound check does not hold, 2 on usage or input errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bounds::{theorem_bound, BoundError, BoundInputs, TheoremId, Variant};
use crate::builtins::{self, BuiltinParams};
use crate::discretize::{
    build_density_approx, cell_averages, decomposition_residual, make_grid, quantity_decomposition_residual,
    DiscretizeError,
};
use crate::fields::{BoxDomain, FieldError, NormData, ScalarField};
use crate::harness::{estimate_order, run_study, verify_bounds, HarnessError, DEFAULT_BOUND_FLOOR};
use crate::io::{self, fmt_num, IoError};
use crate::quadrature::{QuadratureError, QuadratureSpec};
use crate::truncation::{self, TruncationError};

#[derive(Debug, Parser)]
#[command(
    name = "partapprox",
    version,
    about = "Cell-average particle approximation of 2D densities and its error bounds"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cell averages of a density on an N x N grid.
    Discretize(DiscretizeArgs),
    /// Evaluate a theorem bound from norms and geometry.
    Bound(BoundArgs),
    /// Find the truncation half-width L for a tail budget eps.
    Truncate(TruncateArgs),
    /// Run the convergence studies of a TOML config and check the bounds.
    Study(StudyArgs),
    /// Check the error decompositions and quadrature independence.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Builtin field name.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    builtin: Option<String>,
    /// Builtin parameter as key=value, value in TOML syntax (e.g. center=[0.5,0]).
    #[arg(long = "param", value_name = "KEY=VALUE", requires = "builtin")]
    params: Vec<String>,
    /// Sampled field file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QuadArgs {
    /// Gauss-Legendre points per axis per panel.
    #[arg(long, default_value_t = QuadratureSpec::default().points_per_axis_per_panel)]
    quad_points: usize,
    /// Relative tolerance of the adaptive quadrature.
    #[arg(long, default_value_t = QuadratureSpec::default().target_rel_tol)]
    rel_tol: f64,
    /// Panel cap per axis.
    #[arg(long, default_value_t = QuadratureSpec::default().max_panels_per_axis)]
    max_panels: usize,
}

impl QuadArgs {
    fn spec(&self) -> Result<QuadratureSpec, CliError> {
        let s = QuadratureSpec::new(self.quad_points, 1, self.rel_tol)?.with_max_panels(self.max_panels);
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
struct DiscretizeArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Grid box as x_lo,x_hi,y_lo,y_hi (default: the field's support).
    #[arg(long = "box", value_delimiter = ',', allow_negative_numbers = true)]
    domain: Option<Vec<f64>>,
    /// Cells per axis.
    #[arg(long)]
    n: usize,
    /// Write the dump here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    theorem: TheoremId,
    #[arg(long, default_value = "density")]
    variant: Variant,
    #[arg(long)]
    n: usize,
    /// Box side lengths as delta1,delta2.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "domain"
    )]
    delta: Option<Vec<f64>>,
    /// Box as x_lo,x_hi,y_lo,y_hi.
    #[arg(long = "box", value_delimiter = ',', allow_negative_numbers = true)]
    domain: Option<Vec<f64>>,
    /// Truncation half-width L.
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Default for every norm not given explicitly.
    #[arg(long)]
    all_norms: Option<f64>,
    #[arg(long)]
    rho_l1: Option<f64>,
    #[arg(long)]
    rho_sup: Option<f64>,
    #[arg(long)]
    rho_dx: Option<f64>,
    #[arg(long)]
    rho_dy: Option<f64>,
    #[arg(long)]
    omega_l1: Option<f64>,
    #[arg(long)]
    omega_sup: Option<f64>,
    #[arg(long)]
    omega_dx: Option<f64>,
    #[arg(long)]
    omega_dy: Option<f64>,
    #[arg(long)]
    phi_l1: Option<f64>,
    #[arg(long)]
    phi_sup: Option<f64>,
    #[arg(long)]
    phi_dx: Option<f64>,
    #[arg(long)]
    phi_dy: Option<f64>,
}

#[derive(Debug, Args)]
struct TruncateArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, allow_negative_numbers = true)]
    eps: f64,
    /// Lattice step of the L search.
    #[arg(long, default_value_t = crate::harness::DEFAULT_RESOLUTION)]
    resolution: f64,
    /// Total mass (default: declared L1 norm, else the integral over the support).
    #[arg(long)]
    mass: Option<f64>,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// TOML study configuration.
    config: PathBuf,
    /// CSV destination (default: the config's `output`, else standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Relative slack on every bound.
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    /// Absolute floor added to every bound.
    #[arg(long, default_value_t = DEFAULT_BOUND_FLOOR)]
    floor: f64,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Smooth-case residuals must be strictly below this; indicator cases get 100x.
    #[arg(long, default_value_t = 1e-9)]
    residual_tol: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => m,
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::NonFinite { .. } | FieldError::Quadrature(_) => CliError::Domain(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<QuadratureError> for CliError {
    fn from(e: QuadratureError) -> Self {
        match e {
            QuadratureError::InvalidSpec(_) | QuadratureError::InvalidDomain(_) => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<DiscretizeError> for CliError {
    fn from(e: DiscretizeError) -> Self {
        match e {
            DiscretizeError::InvalidResolution | DiscretizeError::NoCoveringBox => CliError::Usage(e.to_string()),
            DiscretizeError::Field(f) => f.into(),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<TruncationError> for CliError {
    fn from(e: TruncationError) -> Self {
        match e {
            TruncationError::NotConcentrated { .. } | TruncationError::Quadrature(_) => CliError::Domain(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Field(f) => f.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Failed { .. } => CliError::Domain(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult = Result<i32, CliError>;

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => {
                let mut buf = Vec::new();
                let r = pool.install(|| dispatch(cli.command, &mut buf));
                out.write_all(&buf).map_err(CliError::from).and(r)
            }
            Err(e) => Err(CliError::Domain(e.to_string())),
        },
        None => dispatch(cli.command, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Discretize(a) => cmd_discretize(&a, out),
        Command::Bound(a) => cmd_bound(&a, out),
        Command::Truncate(a) => cmd_truncate(&a, out),
        Command::Study(a) => cmd_study(&a, out),
        Command::Selftest(a) => cmd_selftest(&a, out),
    }
}

fn parse_box(v: &[f64]) -> Result<BoxDomain, CliError> {
    if v.len() != 4 {
        return Err(CliError::Usage(format!("--box takes 4 values, got {}", v.len())));
    }
    Ok(BoxDomain::new(v[0], v[1], v[2], v[3])?)
}

fn load_field(a: &FieldArgs) -> Result<ScalarField, CliError> {
    if let Some(path) = &a.file {
        return Ok(io::read_field_file(path)?.into_field());
    }
    let name = a.builtin.as_deref().expect("clap requires --builtin or --file");
    let mut table = String::new();
    for p in &a.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param '{p}' is not KEY=VALUE")))?;
        table.push_str(&format!("{} = {}\n", k.trim(), v.trim()));
    }
    let params: BuiltinParams =
        toml::from_str(&table).map_err(|e| CliError::Usage(format!("bad --param: {}", e.message())))?;
    Ok(builtins::from_params(name, &params)?)
}

fn cmd_discretize(a: &DiscretizeArgs, out: &mut dyn Write) -> CliResult {
    let spec = a.quad.spec()?;
    let rho = load_field(&a.field)?;
    let domain = match &a.domain {
        Some(b) => parse_box(b)?,
        None => rho
            .support_hint()
            .ok_or_else(|| CliError::Usage("the field declares no support; pass --box".into()))?,
    };
    let grid = make_grid(domain, a.n)?;
    let pc = build_density_approx(&rho, &grid, &spec)?;
    let dump = io::pc_field_to_string(&pc);
    match &a.output {
        Some(path) => std::fs::write(path, dump)?,
        None => out.write_all(dump.as_bytes())?,
    }
    writeln!(out, "mass={}", fmt_num(pc.mass()))?;
    writeln!(out, "min={}", fmt_num(pc.min()))?;
    writeln!(out, "max={}", fmt_num(pc.max()))?;
    Ok(0)
}

fn role_norms(default: Option<f64>, l1: Option<f64>, sup: Option<f64>, dx: Option<f64>, dy: Option<f64>) -> NormData {
    NormData {
        l1: l1.or(default),
        sup: sup.or(default),
        dx_sup: dx.or(default),
        dy_sup: dy.or(default),
    }
}

fn cmd_bound(a: &BoundArgs, out: &mut dyn Write) -> CliResult {
    let (delta1, delta2) = match (&a.delta, &a.domain) {
        (Some(d), _) if d.len() == 2 => (d[0], d[1]),
        (Some(d), _) => return Err(CliError::Usage(format!("--delta takes 2 values, got {}", d.len()))),
        (None, Some(b)) => {
            let b = parse_box(b)?;
            (b.delta1(), b.delta2())
        }
        (None, None) => match a.half_width {
            Some(l) => (2.0 * l, 2.0 * l),
            None => return Err(CliError::Usage("pass --delta, --box or --half-width".into())),
        },
    };
    let d = a.all_norms;
    let inputs = BoundInputs {
        delta1,
        delta2,
        half_width: a.half_width,
        eps: a.eps,
        rho_norms: role_norms(d, a.rho_l1, a.rho_sup, a.rho_dx, a.rho_dy),
        omega_norms: role_norms(d, a.omega_l1, a.omega_sup, a.omega_dx, a.omega_dy),
        phi_norms: role_norms(d, a.phi_l1, a.phi_sup, a.phi_dx, a.phi_dy),
        n: a.n,
    };
    for norms in [&inputs.rho_norms, &inputs.omega_norms, &inputs.phi_norms] {
        norms.validate()?;
    }
    let report = theorem_bound(a.theorem, a.variant, &inputs)?;
    write!(out, "{report}")?;
    Ok(0)
}

fn cmd_truncate(a: &TruncateArgs, out: &mut dyn Write) -> CliResult {
    let spec = a.quad.spec()?;
    let rho = load_field(&a.field)?;
    if !(a.eps > 0.0) {
        return Err(TruncationError::InvalidEps(a.eps).into());
    }
    let mass = match a.mass {
        Some(m) => m,
        None => truncation::total_mass(&rho, &spec)?,
    };
    let r = truncation::find_truncation_l(&rho, a.eps, mass, a.resolution, &spec)?;
    writeln!(out, "half_width={}", fmt_num(r.half_width))?;
    writeln!(out, "achieved_tail={}", fmt_num(r.achieved_tail))?;
    writeln!(out, "eps={}", fmt_num(r.eps))?;
    writeln!(out, "bracket_lo={}", fmt_num(r.bracket.0))?;
    writeln!(out, "bracket_hi={}", fmt_num(r.bracket.1))?;
    writeln!(out, "total_mass={}", fmt_num(mass))?;
    Ok(0)
}

fn cmd_study(a: &StudyArgs, out: &mut dyn Write) -> CliResult {
    if !(a.slack >= 0.0) || !(a.floor >= 0.0) {
        return Err(CliError::Usage("--slack and --floor must be nonnegative".into()));
    }
    let parsed = io::read_study_config(&a.config)?;
    let mut outcomes = Vec::with_capacity(parsed.cases.len());
    for case in &parsed.cases {
        outcomes.push(run_study(case)?);
    }
    let csv = io::studies_to_csv(&outcomes)?;
    match a.output.as_ref().or(parsed.output.as_ref()) {
        Some(path) => io::write_text_file(path, &csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    let mut all_pass = true;
    for o in &outcomes {
        let variants = [("density", Some(&o.density)), ("quantity", o.quantity.as_ref())];
        for (label, records) in variants {
            let Some(records) = records else { continue };
            let check = verify_bounds(records, a.slack, a.floor);
            all_pass &= check.all_pass();
            let passed = check.checks.iter().filter(|c| c.pass).count();
            let slope = estimate_order(records, a.floor)
                .map(|e| format!("{:.3}", e.slope))
                .unwrap_or_else(|_| "n/a".into());
            writeln!(
                out,
                "{} {} {} {label}: {passed}/{} within bound, slope {slope}",
                if check.all_pass() { "PASS" } else { "FAIL" },
                o.name,
                o.theorem,
                check.checks.len(),
            )?;
            for f in check.failures() {
                writeln!(
                    out,
                    "  N={} measured={} limit={}",
                    f.n,
                    fmt_num(f.measured_error),
                    fmt_num(f.limit)
                )?;
            }
        }
    }
    Ok(if all_pass { 0 } else { 1 })
}

struct SelftestCase {
    name: &'static str,
    rho: ScalarField,
    phi: ScalarField,
    omega: Option<ScalarField>,
    indicator: bool,
}

fn selftest_cases() -> Result<Vec<SelftestCase>, CliError> {
    let bump = builtins::cosine_squared_bump(0.0, 0.0, 1.0)?;
    let shifted_bump = builtins::cosine_squared_bump(0.3, -0.2, 1.0)?;
    let wave = builtins::cosine_squared_wave(0.0, 0.0, 1.0)?;
    let square = BoxDomain::centered_square(1.0)?;
    let case = |name, rho, phi, omega, indicator| SelftestCase {
        name,
        rho,
        phi,
        omega,
        indicator,
    };
    Ok(vec![
        case("bump/bump", bump.clone(), bump.clone(), None, false),
        case(
            "gaussian/bump",
            builtins::gaussian(0.0, 0.0, 1.0)?,
            shifted_bump.clone(),
            None,
            false,
        ),
        case(
            "linear/wave",
            builtins::linear(1.0, 2.0, 3.0, square)?,
            wave.clone(),
            None,
            false,
        ),
        case(
            "bump*wave/bump",
            bump.clone(),
            shifted_bump.clone(),
            Some(wave.clone()),
            false,
        ),
        case(
            "disk/bump",
            builtins::disk_indicator(0.0, 0.0, 0.7)?,
            shifted_bump,
            None,
            true,
        ),
        case(
            "box/wave",
            builtins::box_indicator(BoxDomain::new(-0.45, 0.3, -0.1, 0.55)?),
            wave,
            None,
            true,
        ),
    ])
}

fn cmd_selftest(a: &SelftestArgs, out: &mut dyn Write) -> CliResult {
    if !(a.residual_tol >= 0.0) {
        return Err(CliError::Usage("--residual-tol must be nonnegative".into()));
    }
    let spec = QuadratureSpec::default();
    let square = BoxDomain::centered_square(1.0)?;
    let mut all_pass = true;
    let mut report = |out: &mut dyn Write, pass: bool, line: String| -> std::io::Result<()> {
        all_pass &= pass;
        writeln!(out, "{} {line}", if pass { "PASS" } else { "FAIL" })
    };
    for c in selftest_cases()? {
        let tol = if c.indicator {
            100.0 * a.residual_tol
        } else {
            a.residual_tol
        };
        for n in [4, 8] {
            let grid = make_grid(square, n)?;
            let (kind, residual) = match &c.omega {
                None => ("density", decomposition_residual(&c.rho, &grid, &c.phi, &spec)?),
                Some(w) => (
                    "quantity",
                    quantity_decomposition_residual(&c.rho, w, &grid, &c.phi, &spec)?,
                ),
            };
            report(
                out,
                residual < tol,
                format!(
                    "{kind} decomposition {} N={n} residual={} tol={}",
                    c.name,
                    fmt_num(residual),
                    fmt_num(tol)
                ),
            )?;
        }
    }
    // cell averages must not depend on the panel rule once converged
    let gauss = builtins::gaussian(0.1, -0.3, 1.0)?;
    let grid = make_grid(square, 8)?;
    let coarse = cell_averages(&gauss, &grid, &QuadratureSpec::new(6, 1, 1e-12)?)?;
    let fine = cell_averages(&gauss, &grid, &QuadratureSpec::new(14, 2, 1e-12)?)?;
    let diff = coarse
        .values()
        .iter()
        .zip(fine.values())
        .map(|(p, q)| (p - q).abs() / (1.0 + q.abs()))
        .fold(0.0, f64::max);
    report(
        out,
        diff <= 1e-10,
        format!("quadrature independence gaussian N=8 max_rel_diff={}", fmt_num(diff)),
    )?;
    Ok(if all_pass { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("partapprox").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn bound_examples() {
        let (code, out, _) = call(&[
            "bound",
            "--theorem",
            "th1",
            "--delta",
            "1,1",
            "--all-norms",
            "1",
            "--n",
            "10",
        ]);
        assert_eq!(code, 0);
        assert!(out.lines().any(|l| l == "bound=0.04"), "{out}");
        let (code, out, _) = call(&[
            "bound",
            "--theorem",
            "th3",
            "--delta",
            "1,1",
            "--all-norms",
            "1",
            "--n",
            "8",
        ]);
        assert_eq!(code, 0);
        assert!(out.lines().any(|l| l == "bound=0.5"), "{out}");
    }

    #[test]
    fn bound_usage_errors() {
        let (code, _, err) = call(&[
            "bound",
            "--theorem",
            "th2",
            "--half-width",
            "2",
            "--all-norms",
            "1",
            "--n",
            "8",
        ]);
        assert_eq!(code, 2, "{err}");
        let (code, _, err) = call(&["bound", "--theorem", "th1", "--delta", "1,1", "--n", "8"]);
        assert_eq!(code, 2);
        assert!(err.contains("missing norm"), "{err}");
        let (code, _, _) = call(&["bound", "--theorem", "th9", "--delta", "1,1", "--n", "8"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn discretize_linear_field() {
        let (code, out, err) = call(&[
            "discretize",
            "--builtin",
            "linear",
            "--param",
            "coeffs=[1,0,0]",
            "--param",
            "support=[0,1,0,1]",
            "--n",
            "2",
        ]);
        assert_eq!(code, 0, "{err}");
        let pc = io::parse_pc_field(out.split("mass=").next().unwrap()).unwrap();
        let v = pc.values().values();
        for (got, want) in v.iter().zip([0.25, 0.25, 0.75, 0.75]) {
            assert!((got - want).abs() < 1e-14, "{v:?}");
        }
        assert!(out.contains("mass=0.5"), "{out}");
    }

    #[test]
    fn discretize_missing_file() {
        let (code, _, err) = call(&["discretize", "--file", "/nonexistent/field.txt", "--n", "4"]);
        assert_eq!(code, 2);
        assert!(err.contains("field.txt"), "{err}");
    }

    #[test]
    fn truncate_gaussian() {
        let (code, out, err) = call(&["truncate", "--builtin", "gaussian", "--eps", "0.01"]);
        assert_eq!(code, 0, "{err}");
        let l: f64 = out
            .lines()
            .find_map(|l| l.strip_prefix("half_width="))
            .unwrap()
            .parse()
            .unwrap();
        assert!((2.2..=2.4).contains(&l), "{out}");
        let (code, _, _) = call(&["truncate", "--builtin", "gaussian", "--eps", "-1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn selftest_tolerance_controls_exit() {
        assert_eq!(call(&["selftest"]).0, 0);
        let (code, out, _) = call(&["selftest", "--residual-tol", "0"]);
        assert_eq!(code, 1);
        assert!(out.contains("FAIL"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&[]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
        assert_eq!(call(&["--threads", "0", "selftest"]).0, 2);
    }
}
