//! Command-line front end.
//!
//! Settings are layered: built-in defaults, then `--config`, then
//! `--params`/`--ic`/`--out`/`--format`, then subcommand flags.
//! Exit codes: 0 success, 2 bad arguments, 3 numerical failure, 1 I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::collocation::{evaluate_piecewise, solve_piecewise, solve_with_degree_continuation, DEFAULT_MAX_ITER};
use crate::fdm::{check_stability_bounds, simulate, BoundKind, EulerConfig};
use crate::harness::config::{parse_list, Method, RunConfig};
use crate::harness::convergence::build_convergence_table;
use crate::harness::export::{bifurcation_table, phase_portrait_table, write_convergence, Cell, ExportError, Format, Table};
use crate::harness::reference::{reference_solve, uniform_times};
use crate::model::{FhnParams, State};
use crate::stability::{find_equilibria, find_hopf, Integrator, SimSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fhn", version, about = "FitzHugh-Nagumo equilibria, Hopf points, simulation and convergence tables")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Model parameters.
    #[arg(long, global = true, value_name = "A,GAMMA,MU,I", allow_hyphen_values = true, value_parser = parse_params)]
    params: Option<Params>,
    /// Initial state.
    #[arg(long, global = true, value_name = "V,W", allow_hyphen_values = true, value_parser = parse_pair)]
    ic: Option<(f64, f64)>,
    /// key=value file overriding the defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (directory for `converge`); stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "csv|json", value_parser = parse_format)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy)]
struct Params([f64; 4]);

#[derive(Debug, Clone)]
struct Degrees(Vec<usize>);

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the initial-value problem and write (t, v, w).
    Simulate(SimulateArgs),
    /// Equilibria with eigenvalues and stability class.
    Equilibria,
    /// Hopf points of the equilibrium branch over a current range.
    Hopf {
        #[arg(long, value_name = "LO,HI", default_value = "0,1", allow_hyphen_values = true, value_parser = parse_pair)]
        range: (f64, f64),
    },
    /// Equilibrium branch with eigenvalues and limit-cycle extrema.
    Bifurcation(BifurcationArgs),
    /// Trajectory, nullclines and equilibria for the phase plane.
    Phase {
        #[arg(long, value_name = "LO,HI", default_value = "-0.5,1.5", allow_hyphen_values = true, value_parser = parse_pair)]
        v_range: (f64, f64),
        /// Trajectory samples over [0, T].
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long = "horizon", visible_alias = "T", allow_hyphen_values = true, value_parser = positive)]
        horizon: Option<f64>,
    },
    /// Error tables of the collocation solver against the reference.
    Converge(ConvergeArgs),
    /// Evaluate the forward-difference stability estimates step by step.
    CheckStability {
        #[arg(long, allow_hyphen_values = true, value_parser = positive)]
        tau: Option<f64>,
        #[arg(long = "horizon", visible_alias = "T", allow_hyphen_values = true, value_parser = positive)]
        horizon: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, allow_hyphen_values = true, value_parser = positive)]
    tau: Option<f64>,
    #[arg(long = "horizon", visible_alias = "T", allow_hyphen_values = true, value_parser = positive)]
    horizon: Option<f64>,
    /// Polynomial degree.
    #[arg(long = "degree", visible_alias = "N")]
    degree: Option<usize>,
    #[arg(long)]
    n_sub: Option<usize>,
    #[arg(long, allow_hyphen_values = true, value_parser = positive)]
    tol: Option<f64>,
    /// Output samples over [0, T] for the non-Euler methods.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

#[derive(Debug, Args)]
struct BifurcationArgs {
    #[arg(long, value_name = "LO,HI", default_value = "0,1", allow_hyphen_values = true, value_parser = parse_pair)]
    range: (f64, f64),
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value = "euler", value_parser = parse_integrator)]
    integrator: Integrator,
    /// Length of each limit-cycle run.
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true, value_parser = positive)]
    cycle_horizon: f64,
    #[arg(long, default_value_t = 1e-5, allow_hyphen_values = true, value_parser = positive)]
    cycle_step: f64,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[arg(long, value_name = "N,N,...", value_parser = parse_degrees)]
    degrees: Option<Degrees>,
    #[arg(long, default_value = "taylor-piecewise", value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    n_sub: Option<usize>,
    #[arg(long, allow_hyphen_values = true, value_parser = positive)]
    tol: Option<f64>,
    #[arg(long = "horizon", visible_alias = "T", allow_hyphen_values = true, value_parser = positive)]
    horizon: Option<f64>,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err("must be a positive number".into()),
        Err(_) => Err("not a number".into()),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_list::<f64>(s)?.as_slice() {
        &[x, y] => Ok((x, y)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

fn parse_params(s: &str) -> Result<Params, String> {
    let v = parse_list::<f64>(s)?;
    <[f64; 4]>::try_from(v)
        .map(Params)
        .map_err(|_| "expected four comma-separated numbers a,gamma,mu,I".into())
}

fn parse_degrees(s: &str) -> Result<Degrees, String> {
    parse_list(s).map(Degrees)
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    match s {
        "euler" => Ok(Integrator::Euler),
        "reference" => Ok(Integrator::Reference),
        other => Err(format!("unknown integrator '{other}' (expected euler or reference)")),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs one subcommand and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_file(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(Params([a, gamma, mu, current])) = cli.params {
        cfg.params = FhnParams { a, gamma, mu, current };
    }
    if let Some((v, w)) = cli.ic {
        cfg.ic = State::new(v, w);
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    Ok(cfg)
}

fn check(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))
}

fn emit(table: &Table, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => Ok(table.write(path, cfg.format)?),
        None => stdout
            .write_all(table.render(cfg.format).as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Simulate(args) => {
            if let Some(m) = args.method {
                cfg.method = m;
            }
            override_opt(&mut cfg.tau, args.tau);
            override_opt(&mut cfg.horizon, args.horizon);
            override_opt(&mut cfg.degree, args.degree);
            override_opt(&mut cfg.n_sub, args.n_sub);
            override_opt(&mut cfg.tol, args.tol);
            check(&cfg)?;
            if args.samples == 0 {
                return Err(CliError::Usage("--samples must be at least 1".into()));
            }
            emit(&simulate_table(&cfg, args.samples)?, &cfg, stdout)
        }
        Command::Equilibria => {
            check(&cfg)?;
            emit(&equilibria_table(&cfg.params), &cfg, stdout)
        }
        Command::Hopf { range: (lo, hi) } => {
            check(&cfg)?;
            let points = find_hopf(&cfg.params, lo, hi).map_err(|e| match e {
                crate::stability::HopfError::InvalidInterval { .. } => CliError::Usage(e.to_string()),
                other => numerical(other),
            })?;
            let mut table = Table::new(["I_crit", "v_star", "omega_imag"]);
            for h in points {
                table.push(vec![Cell::Num(h.i_crit), Cell::Num(h.v_star), Cell::Num(h.omega_imag)]);
            }
            emit(&table, &cfg, stdout)
        }
        Command::Bifurcation(args) => {
            check(&cfg)?;
            let sim = SimSettings {
                integrator: args.integrator,
                ic: cfg.ic,
                horizon: args.cycle_horizon,
                step: args.cycle_step,
                ..SimSettings::default()
            };
            let table = bifurcation_table(&cfg.params, args.range.0, args.range.1, args.points, &sim)?;
            emit(&table, &cfg, stdout)
        }
        Command::Phase {
            v_range,
            samples,
            horizon,
        } => {
            override_opt(&mut cfg.horizon, horizon);
            cfg.method = Method::Reference;
            check(&cfg)?;
            if samples == 0 {
                return Err(CliError::Usage("--samples must be at least 1".into()));
            }
            let times = uniform_times(0.0, cfg.horizon, samples);
            let traj = reference_solve(&cfg.params, cfg.ic, cfg.horizon, &times).map_err(numerical)?;
            emit(&phase_portrait_table(&cfg.params, &[traj], v_range)?, &cfg, stdout)
        }
        Command::Converge(args) => {
            if !matches!(args.method, Method::Taylor | Method::TaylorPiecewise) {
                return Err(CliError::Usage("--method must be taylor or taylor-piecewise".into()));
            }
            cfg.method = args.method;
            override_opt(&mut cfg.degrees, args.degrees.map(|d| d.0));
            override_opt(&mut cfg.n_sub, args.n_sub);
            override_opt(&mut cfg.tol, args.tol);
            override_opt(&mut cfg.horizon, args.horizon);
            check(&cfg)?;
            let table = build_convergence_table(&cfg, &cfg.degrees).map_err(numerical)?;
            for row in table.rows.iter().filter(|r| r.failed()) {
                let _ = writeln!(stderr, "N = {}: {}", row.degree, row.failure.as_deref().unwrap_or(""));
            }
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
            for path in write_convergence(&table, &dir, cfg.format)? {
                let _ = writeln!(stdout, "{}", path.display());
            }
            Ok(())
        }
        Command::CheckStability { tau, horizon } => {
            override_opt(&mut cfg.tau, tau);
            override_opt(&mut cfg.horizon, horizon);
            cfg.method = Method::Euler;
            check(&cfg)?;
            let (table, summary) = stability_table(&cfg)?;
            for line in summary {
                let _ = writeln!(stderr, "{line}");
            }
            emit(&table, &cfg, stdout)
        }
    }
}

fn override_opt<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn trajectory_table(times: &[f64], states: &[State]) -> Table {
    let mut table = Table::new(["t", "v", "w"]);
    for (&t, s) in times.iter().zip(states) {
        table.push(vec![Cell::Num(t), Cell::Num(s.v), Cell::Num(s.w)]);
    }
    table
}

fn simulate_table(cfg: &RunConfig, samples: usize) -> Result<Table, CliError> {
    let p = &cfg.params;
    let times = uniform_times(0.0, cfg.horizon, samples);
    let states: Vec<State> = match cfg.method {
        Method::Euler => {
            let ecfg = EulerConfig::with_horizon(cfg.tau, cfg.horizon, cfg.ic).map_err(|e| CliError::Usage(e.to_string()))?;
            let traj = simulate(p, &ecfg).map_err(numerical)?;
            let t: Vec<f64> = traj.times().collect();
            let s: Vec<State> = (0..traj.len()).map(|k| traj.state(k)).collect();
            return Ok(trajectory_table(&t, &s));
        }
        Method::Reference => reference_solve(p, cfg.ic, cfg.horizon, &times).map_err(numerical)?.states,
        Method::Taylor => {
            let sol = solve_with_degree_continuation(p, 0.0, cfg.horizon, cfg.degree, cfg.ic, cfg.tol, DEFAULT_MAX_ITER)
                .map_err(numerical)?;
            times.iter().map(|&t| sol.evaluate(t)).collect()
        }
        Method::TaylorPiecewise => {
            let pieces = solve_piecewise(p, 0.0, cfg.horizon, cfg.degree, cfg.n_sub, cfg.ic, cfg.tol).map_err(numerical)?;
            times.iter().map(|&t| evaluate_piecewise(&pieces, t)).collect()
        }
    };
    Ok(trajectory_table(&times, &states))
}

pub fn equilibria_table(p: &FhnParams) -> Table {
    let mut table = Table::new([
        "v_star", "w_star", "multiplicity", "class", "re_l1", "im_l1", "re_l2", "im_l2", "trace", "det",
    ]);
    for eq in find_equilibria(p) {
        table.push(vec![
            Cell::Num(eq.v_star),
            Cell::Num(eq.w_star),
            Cell::Int(eq.multiplicity as i64),
            Cell::Text(eq.class.as_str().to_string()),
            Cell::Num(eq.eigen.lambda1.re),
            Cell::Num(eq.eigen.lambda1.im),
            Cell::Num(eq.eigen.lambda2.re),
            Cell::Num(eq.eigen.lambda2.im),
            Cell::Num(eq.jacobian.trace()),
            Cell::Num(eq.jacobian.det()),
        ]);
    }
    table
}

fn stability_table(cfg: &RunConfig) -> Result<(Table, Vec<String>), CliError> {
    let ecfg = EulerConfig::with_horizon(cfg.tau, cfg.horizon, cfg.ic).map_err(|e| CliError::Usage(e.to_string()))?;
    let traj = simulate(&cfg.params, &ecfg).map_err(numerical)?;
    let report = check_stability_bounds(&traj, &cfg.params);
    let kinds = [
        (BoundKind::Membrane, "membrane"),
        (BoundKind::Recovery, "recovery"),
        (BoundKind::Simplified, "simplified"),
    ];
    let mut columns = vec!["k".to_string(), "t".into(), "v".into(), "w".into()];
    for (_, name) in kinds {
        columns.extend([format!("{name}_lhs"), format!("{name}_rhs"), format!("{name}_ok")]);
    }
    let mut table = Table::new(columns);
    for k in 0..traj.len() {
        let s = traj.state(k);
        let mut row = vec![Cell::Int(k as i64), Cell::Num(ecfg.time(k)), Cell::Num(s.v), Cell::Num(s.w)];
        for (kind, _) in kinds {
            let c = report.checks(kind)[k];
            row.extend([Cell::Num(c.lhs), Cell::Num(c.rhs), Cell::Int(c.satisfied as i64)]);
        }
        table.push(row);
    }
    let summary = kinds
        .iter()
        .map(|&(kind, name)| match report.first_violation(kind) {
            None => format!("{name}: satisfied at all {} steps", traj.len()),
            Some(c) => format!("{name}: first violated at k = {} ({:e} > {:e})", c.k, c.lhs, c.rhs),
        })
        .collect();
    Ok((table, summary))
}

/// Entry point of the `fhn` binary.
pub fn main_with_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
