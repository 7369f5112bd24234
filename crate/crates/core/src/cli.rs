//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::cumulant::{
    conservativeness_verdict, minimal_solution_at_zero, nonuniqueness_residual, shifted_minimal,
    solve_cumulant, uniform_grid, CumulantFlow, CumulantOptions, ExtensionOptions,
};
use crate::error::CbError;
use crate::mechanism::{stable_mechanism, BranchingMechanism, LeftHalfPoint, MechanismFile};
use crate::simulator::{
    simulate_ensemble, summarize, PathSimulator, RecordGrid, SimConfig, SmallJumpPolicy,
};
use crate::verify::{
    branching_property_check, dynkin_residual, generator_report, martingale_residual,
    monte_carlo_laplace, semigroup_report, TestFunction, VerificationReport,
};

type C = Complex64;

#[derive(Debug, Parser)]
#[command(
    name = "cbranch",
    version,
    about = "Cumulant flows, path simulation and Monte Carlo checks for continuous-state branching processes",
    disable_help_subcommand = true,
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Mechanism: a JSON file or the shorthand stable:SIGMA,ALPHA
    #[arg(long, global = true, value_name = "FILE|stable:σ,α")]
    mech: Option<String>,

    /// Point of the left half-space, comma-separated complex components
    #[arg(
        long,
        global = true,
        allow_hyphen_values = true,
        value_name = "a+bi[,a+bi…]"
    )]
    lambda: Option<String>,

    /// Initial state, comma-separated nonnegative reals
    #[arg(long, global = true, value_name = "r[,r…]")]
    x0: Option<String>,

    /// Second initial state for the branching check [default: x0]
    #[arg(long, global = true, value_name = "r[,r…]")]
    y0: Option<String>,

    /// Horizon for flows, simulations and diagnostics
    #[arg(long = "T", global = true, default_value_t = 1.0, value_name = "real")]
    horizon: f64,

    /// Evaluation time
    #[arg(long, global = true, default_value_t = 1.0, value_name = "real")]
    t: f64,

    /// Second time of the semigroup check
    #[arg(long, global = true, default_value_t = 0.5, value_name = "real")]
    s: f64,

    /// Terminal time of martingale and Dynkin checks
    #[arg(long, global = true, default_value_t = 1.0, value_name = "real")]
    u: f64,

    /// Checkpoints in [0, u] [default: 0, u/2, u]
    #[arg(long, global = true, value_name = "r[,r…]")]
    checkpoints: Option<String>,

    /// Number of simulated paths (pairs for the branching check)
    #[arg(long, global = true, default_value_t = 10_000, value_name = "int")]
    paths: usize,

    /// Master seed of the per-path random streams
    #[arg(long, global = true, default_value_t = 0, value_name = "uint64")]
    seed: u64,

    /// Euler time step
    #[arg(long, global = true, default_value_t = 1e-3, value_name = "real")]
    dt: f64,

    /// Small-jump cutoff in (0, 1]
    #[arg(long, global = true, default_value_t = 1e-2, value_name = "real")]
    eps: f64,

    /// Explosion threshold on the total mass
    #[arg(long, global = true, default_value_t = 1e6, value_name = "real")]
    truncate: f64,

    /// Treatment of jumps below the cutoff
    #[arg(long, global = true, value_enum, default_value_t = Policy::Drift)]
    policy: Policy,

    /// Number of output intervals (flows) or record stride (paths)
    #[arg(long, global = true, default_value_t = 100, value_name = "int")]
    grid: usize,

    /// Output file (written atomically) [default: standard output]
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Output format [default: csv for flows and single paths, json otherwise]
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Band width in standard errors
    #[arg(short = 'k', global = true, default_value_t = 3.0, value_name = "real")]
    k: f64,

    /// Relative tolerance of the ODE solver
    #[arg(long, global = true, default_value_t = 1e-9, value_name = "real")]
    rel_tol: f64,

    /// Absolute tolerance of the ODE solver
    #[arg(long, global = true, default_value_t = 1e-12, value_name = "real")]
    abs_tol: f64,

    /// Test function of the Dynkin check
    #[arg(long, global = true, value_enum, default_value_t = TestFn::Exp)]
    test_fn: TestFn,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a mechanism against the admissibility rules
    Validate {
        /// Mechanism JSON file (alternative to --mech)
        file: Option<PathBuf>,
    },
    /// Evaluate H at --lambda
    EvalH,
    /// Solve the backward equation from --lambda on [0, T]
    SolveK,
    /// Minimal solution K(t, 0) on [0, T]
    MinimalZero,
    /// Conservativeness verdict on [0, T]
    Conservative,
    /// Simulate --paths paths from --x0 on [0, T]
    Simulate,
    /// Cross-check simulation against the cumulant flow
    Verify {
        #[command(subcommand)]
        which: VerifyKind,
    },
    /// Residuals of the shifted solutions of the backward equation at λ = 0
    DemoNonuniqueness,
}

#[derive(Debug, Subcommand)]
enum VerifyKind {
    /// Monte Carlo Laplace transform at --t (survival frequency when λ = 0)
    Laplace,
    /// Exponential martingale at the checkpoints
    Martingale,
    /// Dynkin residual at the checkpoints
    Dynkin,
    /// Semigroup law K(s+t) = K(s)∘K(t)
    Semigroup,
    /// Branching property from --x0 and --y0
    Branching,
    /// Generator identity at --lambda and --x0
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Drift,
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestFn {
    Exp,
    TimeExp,
}

/// Failure as reported on standard error.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
    violations: Vec<serde_json::Value>,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            violations: vec![],
        }
    }

    fn range(message: impl Into<String>) -> Self {
        Self::new("range-violation", message)
    }

    fn to_json(&self) -> String {
        let mut v = json!({"error": self.kind, "message": self.message});
        if !self.violations.is_empty() {
            v["violations"] = serde_json::Value::Array(self.violations.clone());
        }
        v.to_string()
    }
}

impl From<CbError> for Failure {
    fn from(e: CbError) -> Self {
        let violations = match &e {
            CbError::InvalidMechanism(vs) => vs
                .iter()
                .map(|v| json!({"coordinate": v.coordinate, "rule": v.rule, "value": v.value}))
                .collect(),
            _ => vec![],
        };
        Self {
            kind: e.kind(),
            message: e.to_string(),
            violations,
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

/// Runs the command line `argv` (program name first). Returns the exit
/// status: 0 on success, 1 on errors, 2 when a verification fails.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
                | ErrorKind::MissingSubcommand => {
                    let f = Failure::new("missing-command", e.render().to_string());
                    let _ = writeln!(err, "{}", f.to_json());
                    1
                }
                ErrorKind::InvalidSubcommand => {
                    let f = Failure::new("unknown-command", e.render().to_string());
                    let _ = writeln!(err, "{}", f.to_json());
                    1
                }
                ErrorKind::ValueValidation | ErrorKind::InvalidValue => {
                    let f = Failure::range(e.render().to_string());
                    let _ = writeln!(err, "{}", f.to_json());
                    1
                }
                _ => {
                    let f = Failure::new("usage", e.render().to_string());
                    let _ = writeln!(err, "{}", f.to_json());
                    1
                }
            };
        }
    };
    configure_threads();
    match dispatch(&cli, out) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(f) => {
            let _ = writeln!(err, "{}", f.to_json());
            1
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("CB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        // The global pool can be configured once per process; later calls
        // keep the first setting.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Parses `a`, `a+bi`, `a-bi` or `bi`; whitespace is rejected.
pub fn parse_complex(s: &str) -> Result<C, String> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(format!("malformed complex number {s:?}"));
    }
    let bad = || format!("malformed complex number {s:?}");
    let Some(body) = s.strip_suffix('i') else {
        return s
            .parse::<f64>()
            .map(|re| C::new(re, 0.0))
            .map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&j| (bytes[j] == b'+' || bytes[j] == b'-') && !matches!(bytes[j - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(j) => (&body[..j], &body[j..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.trim_start_matches('+').parse().map_err(|_| bad())?;
    if !(re.is_finite() && im.is_finite()) {
        return Err(bad());
    }
    Ok(C::new(re, im))
}

fn parse_reals(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::range(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}

fn load_mechanism(src: &str) -> Result<BranchingMechanism, Failure> {
    if let Some(rest) = src.strip_prefix("stable:") {
        let parts = parse_reals(rest, "--mech stable")?;
        if parts.len() != 2 {
            return Err(Failure::new(
                "malformed-config",
                "stable shorthand is stable:SIGMA,ALPHA",
            ));
        }
        return Ok(stable_mechanism(parts[0], parts[1])?);
    }
    let text = std::fs::read_to_string(src)
        .map_err(|e| Failure::new("io", format!("reading {src}: {e}")))?;
    let file = MechanismFile::from_json(&text)
        .map_err(|e| Failure::new("malformed-config", e.to_string()))?;
    Ok(file.to_mechanism()?)
}

/// Writes to `--out` through a temporary file in the same directory, or to
/// standard output.
fn emit(cli: &Cli, out: &mut dyn Write, body: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::new("io", e.to_string());
    match &cli.out {
        None => out.write_all(body).map_err(io),
        Some(path) => {
            let dir = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(body).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            tmp.persist(path).map_err(|e| io(e.error))?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

struct Checked {
    mech: BranchingMechanism,
    ode: CumulantOptions,
    ext: ExtensionOptions,
}

fn require<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, Failure> {
    v.clone()
        .ok_or_else(|| Failure::new("usage", format!("{flag} is required for this command")))
}

fn checked(cli: &Cli) -> Result<Checked, Failure> {
    let positive = |v: f64, name: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Failure::range(format!("{name} must be positive, got {v}")))
        }
    };
    positive(cli.rel_tol, "--rel-tol")?;
    positive(cli.abs_tol, "--abs-tol")?;
    positive(cli.k, "-k")?;
    positive(cli.dt, "--dt")?;
    positive(cli.truncate, "--truncate")?;
    if !(cli.eps > 0.0 && cli.eps <= 1.0) {
        return Err(Failure::range(format!(
            "--eps must lie in (0, 1], got {}",
            cli.eps
        )));
    }
    for (v, name) in [
        (cli.horizon, "--T"),
        (cli.t, "--t"),
        (cli.s, "--s"),
        (cli.u, "--u"),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Failure::range(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    if cli.paths == 0 {
        return Err(Failure::range("--paths must be at least 1"));
    }
    if cli.grid == 0 {
        return Err(Failure::range("--grid must be at least 1"));
    }
    let src = require(&cli.mech, "--mech")?;
    let mech = load_mechanism(&src)?;
    let ode = CumulantOptions {
        rel_tol: cli.rel_tol,
        abs_tol: cli.abs_tol,
        ..Default::default()
    };
    let ext = ExtensionOptions {
        ode,
        ..Default::default()
    };
    Ok(Checked { mech, ode, ext })
}

fn lambda_of(cli: &Cli, m: usize) -> Result<LeftHalfPoint, Failure> {
    let text = require(&cli.lambda, "--lambda")?;
    let parts = text
        .split(',')
        .map(parse_complex)
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::range)?;
    if parts.len() != m {
        return Err(Failure::range(format!(
            "--lambda has {} components, mechanism has {m}",
            parts.len()
        )));
    }
    LeftHalfPoint::new(parts).map_err(|e| Failure::range(e.to_string()))
}

fn state_of(v: &Option<String>, flag: &str, m: usize) -> Result<Vec<f64>, Failure> {
    let x = parse_reals(&require(v, flag)?, flag)?;
    if x.len() != m {
        return Err(Failure::range(format!(
            "{flag} has {} components, mechanism has {m}",
            x.len()
        )));
    }
    if x.iter().any(|v| *v < 0.0) {
        return Err(Failure::range(format!(
            "{flag} must be componentwise nonnegative"
        )));
    }
    Ok(x)
}

fn sim_config(cli: &Cli) -> SimConfig {
    SimConfig {
        dt: cli.dt,
        eps: cli.eps,
        truncation_n: cli.truncate,
        policy: match cli.policy {
            Policy::Drift => SmallJumpPolicy::DriftOnly,
            Policy::Gauss => SmallJumpPolicy::GaussianCorrection,
        },
        master_seed: cli.seed,
        record: RecordGrid::EveryStep,
    }
}

fn checkpoints(cli: &Cli) -> Result<Vec<f64>, Failure> {
    match &cli.checkpoints {
        Some(s) => parse_reals(s, "--checkpoints"),
        None => Ok(vec![0.0, cli.u / 2.0, cli.u]),
    }
}

fn flow_output(cli: &Cli, flow: &CumulantFlow, extra: serde_json::Value) -> Vec<u8> {
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            flow.write_csv(&mut buf).expect("writing to memory");
            buf
        }
        Format::Json => {
            let k: Vec<Vec<[f64; 2]>> = flow
                .values
                .iter()
                .map(|v| v.iter().map(|c| [c.re, c.im]).collect())
                .collect();
            let mut v = json!({"t": flow.times, "K": k, "steps": flow.stats.steps});
            if let serde_json::Value::Object(extra) = extra {
                for (key, val) in extra {
                    v[key] = val;
                }
            }
            to_json(&v)
        }
    }
}

fn reports_output(cli: &Cli, out: &mut dyn Write, reports: &[VerificationReport]) -> Outcome {
    let body = if reports.len() == 1 {
        to_json(&reports[0])
    } else {
        to_json(&reports)
    };
    emit(cli, out, &body)?;
    Ok(reports.iter().all(|r| r.pass))
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Outcome {
    if let Command::Validate { file } = &cli.command {
        return validate(cli, file.as_deref(), out);
    }
    if let Command::DemoNonuniqueness = &cli.command {
        return demo_nonuniqueness(cli, out);
    }
    let Checked { mech, ode, ext } = checked(cli)?;
    let m = mech.m;
    match &cli.command {
        Command::Validate { .. } | Command::DemoNonuniqueness => unreachable!(),
        Command::EvalH => {
            let lambda = lambda_of(cli, m)?;
            let h = mech.evaluate(lambda.as_slice())?;
            let body = match cli.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&json!({
                    "H": h.values.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                    "max_error": h.max_error,
                    "oscillatory": h.oscillatory,
                })),
                Format::Csv => {
                    let mut s = String::from("component,Re_H,Im_H\n");
                    for (i, c) in h.values.iter().enumerate() {
                        s.push_str(&format!("{},{:.16e},{:.16e}\n", i + 1, c.re, c.im));
                    }
                    s.into_bytes()
                }
            };
            emit(cli, out, &body)?;
            Ok(true)
        }
        Command::SolveK => {
            let lambda = lambda_of(cli, m)?;
            positive_horizon(cli)?;
            let flow = solve_cumulant(&mech, &lambda, &uniform_grid(cli.horizon, cli.grid), &ode)?;
            emit(cli, out, &flow_output(cli, &flow, json!({})))?;
            Ok(true)
        }
        Command::MinimalZero => {
            positive_horizon(cli)?;
            let ext_flow =
                minimal_solution_at_zero(&mech, &uniform_grid(cli.horizon, cli.grid), &ext)?;
            let extra = json!({
                "converged": ext_flow.converged,
                "k_final": ext_flow.k_final,
                "gap": ext_flow.gap,
                "monotone_violations": ext_flow.monotone_violations,
            });
            emit(cli, out, &flow_output(cli, &ext_flow.flow, extra))?;
            Ok(true)
        }
        Command::Conservative => {
            positive_horizon(cli)?;
            let report = conservativeness_verdict(&mech, cli.horizon, 1e-7, &ext)?;
            emit(cli, out, &to_json(&report))?;
            Ok(true)
        }
        Command::Simulate => {
            let x0 = state_of(&cli.x0, "--x0", m)?;
            let mut cfg = sim_config(cli);
            cfg.record = RecordGrid::EveryNth(cli.grid);
            let sim = PathSimulator::new(&mech, &x0, cli.horizon, &cfg)?;
            let paths = simulate_ensemble(&mech, &x0, cli.horizon, &cfg, cli.paths)?;
            let body = match cli.format.unwrap_or(if cli.paths == 1 {
                Format::Csv
            } else {
                Format::Json
            }) {
                Format::Csv => {
                    if cli.paths != 1 {
                        return Err(Failure::range("csv path export needs --paths 1"));
                    }
                    let mut buf = Vec::new();
                    paths[0].write_csv(m, &mut buf).expect("writing to memory");
                    buf
                }
                Format::Json => to_json(&summarize(&paths, m, cli.horizon, &cfg, sim.dt())),
            };
            emit(cli, out, &body)?;
            Ok(true)
        }
        Command::Verify { which } => {
            let cfg = sim_config(cli);
            let reports = match which {
                VerifyKind::Laplace => {
                    let lambda = lambda_of(cli, m)?;
                    let x0 = state_of(&cli.x0, "--x0", m)?;
                    vec![monte_carlo_laplace(
                        &mech, &x0, cli.t, &lambda, cli.paths, &cfg, cli.k, &ext,
                    )?]
                }
                VerifyKind::Martingale => {
                    let lambda = lambda_of(cli, m)?;
                    let x0 = state_of(&cli.x0, "--x0", m)?;
                    martingale_residual(
                        &mech,
                        &x0,
                        &lambda,
                        cli.u,
                        &checkpoints(cli)?,
                        cli.paths,
                        &cfg,
                        cli.k,
                        &ode,
                    )?
                }
                VerifyKind::Dynkin => {
                    let lambda = lambda_of(cli, m)?;
                    let x0 = state_of(&cli.x0, "--x0", m)?;
                    let f = match cli.test_fn {
                        TestFn::Exp => TestFunction::Exponential(lambda),
                        TestFn::TimeExp => TestFunction::TimeExponential { lambda, u: cli.u },
                    };
                    dynkin_residual(
                        &mech,
                        &x0,
                        &f,
                        cli.u,
                        &checkpoints(cli)?,
                        cli.paths,
                        &cfg,
                        cli.k,
                        &ode,
                    )?
                }
                VerifyKind::Semigroup => {
                    let lambda = lambda_of(cli, m)?;
                    vec![semigroup_report(&mech, &lambda, cli.s, cli.t, 1e-6, &ode)?]
                }
                VerifyKind::Branching => {
                    let lambda = lambda_of(cli, m)?;
                    let x0 = state_of(&cli.x0, "--x0", m)?;
                    let y0 = match &cli.y0 {
                        Some(_) => state_of(&cli.y0, "--y0", m)?,
                        None => x0.clone(),
                    };
                    vec![branching_property_check(
                        &mech, &x0, &y0, cli.t, &lambda, cli.paths, &cfg, cli.k, &ext,
                    )?]
                }
                VerifyKind::Generator => {
                    let lambda = lambda_of(cli, m)?;
                    let x0 = state_of(&cli.x0, "--x0", m)?;
                    vec![generator_report(&mech, &lambda, &x0)?]
                }
            };
            reports_output(cli, out, &reports)
        }
    }
}

fn positive_horizon(cli: &Cli) -> Result<(), Failure> {
    if cli.horizon > 0.0 && cli.horizon.is_finite() {
        Ok(())
    } else {
        Err(Failure::range(format!(
            "--T must be positive, got {}",
            cli.horizon
        )))
    }
}

fn validate(cli: &Cli, file: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let src = match (file, &cli.mech) {
        (Some(f), _) => f.to_string_lossy().into_owned(),
        (None, Some(m)) => m.clone(),
        (None, None) => return Err(Failure::new("usage", "validate needs a FILE or --mech")),
    };
    let mech = if src.starts_with("stable:") {
        load_mechanism(&src)?
    } else {
        let text = std::fs::read_to_string(&src)
            .map_err(|e| Failure::new("io", format!("reading {src}: {e}")))?;
        MechanismFile::from_json(&text)
            .map_err(|e| Failure::new("malformed-config", e.to_string()))?
            .to_unchecked()?
    };
    mech.ensure_valid()?;
    emit(
        cli,
        out,
        &to_json(&json!({"valid": true, "m": mech.m, "violations": []})),
    )?;
    Ok(true)
}

fn demo_nonuniqueness(cli: &Cli, out: &mut dyn Write) -> Outcome {
    let src = cli.mech.clone().unwrap_or_else(|| "stable:2,0.5".into());
    let Some(rest) = src.strip_prefix("stable:") else {
        return Err(Failure::new(
            "usage",
            "demo-nonuniqueness needs the stable shorthand stable:SIGMA,ALPHA",
        ));
    };
    let p = parse_reals(rest, "--mech stable")?;
    if p.len() != 2 {
        return Err(Failure::new(
            "malformed-config",
            "stable shorthand is stable:SIGMA,ALPHA",
        ));
    }
    let (sigma, alpha) = (p[0], p[1]);
    let horizon = if cli.horizon > 0.0 { cli.horizon } else { 3.0 };
    let mut rows = Vec::new();
    for r in [0.0, 0.5, 1.0, 2.0, f64::INFINITY] {
        let res = nonuniqueness_residual(sigma, alpha, r, horizon)?;
        rows.push(json!({
            "r": if r.is_finite() { json!(r) } else { json!("inf") },
            "residual": res,
            "K_at_T": shifted_minimal(sigma, alpha, r, horizon),
        }));
    }
    let body = to_json(&json!({
        "sigma": sigma,
        "alpha": alpha,
        "T": horizon,
        "solutions": rows,
    }));
    emit(cli, out, &body)?;
    Ok(true)
}
