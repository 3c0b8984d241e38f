//! Command-line front end: LFA queries, single multigrid solves, SSN solves
//! and batch table reproduction.
//!
//! Every solver flag may also come from a TOML file given by `--config`,
//! using the flag names as keys; flags win over the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::Error;
use crate::experiments::{mu_pred, run_cells, sweep_cells, table1_cells, table2_cells, CellSpec};
use crate::grid::{Coarsening, GridSpec, SaddleOperator, ScalarField};
use crate::lfa::{bsr_damping, cjr_optimal, optimize_sampled, LfaParams, Scheme};
use crate::multigrid::{solve, CycleSpec, CycleType, Hierarchy, SmootherConfig, DEFAULT_TOL};
use crate::problems::{sparse_control_target, Manufactured, SPARSE_CONTROL_U0, SPARSE_CONTROL_U1};
use crate::smoothers::{SmootherKind, DEFAULT_PCG_ITERS};
use crate::ssn::{ssn_solve, ControlParams, ProblemData, SsnOptions};

/// Environment variable holding the worker-thread count for batch runs.
pub const WORKERS_ENV: &str = "OCMG_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(Error),
    #[error("{0}")]
    Solver(Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Singular
            | Error::SingularSymbol { .. }
            | Error::PcgBreakdown { .. }
            | Error::KrylovStalled { .. }
            | Error::LineSearchFailed { .. }
            | Error::MultigridDiverged { .. } => CliError::Solver(e),
            _ => CliError::Validation(e),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(name = "ocmg", version, about = "Multigrid for elliptic sparse optimal control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smoothing factor and optimal damping, closed form against sampled.
    Lfa(SolverArgs),
    /// Multigrid solve of the manufactured problem or user data.
    Mg(SolverArgs),
    /// Semi-smooth Newton solve of the sparse, box-constrained problem.
    Ssn(SolverArgs),
    /// Batch reproduction of the convergence tables.
    Repro {
        target: ReproTarget,
        /// Output CSV file (default `<target>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Cjr,
    Bsr,
    Ibsr,
}

impl SchemeArg {
    pub fn kind(self) -> SmootherKind {
        match self {
            SchemeArg::Cjr => SmootherKind::Cjr,
            SchemeArg::Bsr => SmootherKind::BsrExact,
            SchemeArg::Ibsr => SmootherKind::Ibsr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
pub enum CycleArg {
    #[value(name = "V", alias = "v")]
    V,
    #[value(name = "W", alias = "w")]
    W,
}

impl From<CycleArg> for CycleType {
    fn from(c: CycleArg) -> Self {
        match c {
            CycleArg::V => CycleType::V,
            CycleArg::W => CycleType::W,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReproTarget {
    Table1,
    Table2,
    Sweep,
}

impl ReproTarget {
    fn name(self) -> &'static str {
        match self {
            ReproTarget::Table1 => "table1",
            ReproTarget::Table2 => "table2",
            ReproTarget::Sweep => "sweep",
        }
    }
}

/// Solver flags; every field can also be set from the config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SolverArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Mesh step for `lfa` (defaults to `1/N`).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub u0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub u1: Option<f64>,
    #[arg(long, value_enum)]
    pub cycle: Option<CycleArg>,
    #[arg(long)]
    pub nu: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pcg_iters: Option<usize>,
    /// Source term `f` in the field-dump format (mg and ssn).
    #[arg(long)]
    pub f: Option<PathBuf>,
    /// Target `g` in the field-dump format (mg and ssn).
    #[arg(long)]
    pub g: Option<PathBuf>,
    /// CSV file (lfa, mg) or output directory (ssn).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl SolverArgs {
    /// Flags take precedence over values read from `--config`.
    pub fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let mut args = self;
        if let Some(path) = args.config.clone() {
            let text = fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
            let file: SolverArgs =
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            overlay!(args, file, scheme, q, n, h, alpha, beta, u0, u1, cycle, nu, tol, seed, pcg_iters, f, g, out);
        }
        Ok(ExperimentConfig {
            scheme: args.scheme.unwrap_or(SchemeArg::Cjr),
            q: args.q.unwrap_or(2),
            n: args.n.unwrap_or(256),
            h: args.h,
            alpha: args.alpha.unwrap_or(1e-6),
            beta: args.beta.unwrap_or(1e-3),
            u0: args.u0.unwrap_or(SPARSE_CONTROL_U0),
            u1: args.u1.unwrap_or(SPARSE_CONTROL_U1),
            cycle: args.cycle.unwrap_or(CycleArg::W).into(),
            nu: args.nu.unwrap_or(1),
            tol: args.tol.unwrap_or(DEFAULT_TOL),
            seed: args.seed.unwrap_or(0),
            pcg_iters: args.pcg_iters.unwrap_or(DEFAULT_PCG_ITERS),
            f: args.f,
            g: args.g,
            out: args.out,
        })
    }
}

/// Fully resolved parameters of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: SchemeArg,
    pub q: usize,
    pub n: usize,
    pub h: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub u0: f64,
    pub u1: f64,
    pub cycle: CycleType,
    pub nu: usize,
    pub tol: f64,
    pub seed: u64,
    pub pcg_iters: usize,
    pub f: Option<PathBuf>,
    pub g: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    fn coarsening(&self) -> Result<Coarsening, CliError> {
        Ok(Coarsening::new(self.q)?)
    }

    fn grid(&self) -> Result<GridSpec, CliError> {
        let grid = GridSpec::new(self.n)?;
        grid.coarsen(self.q)?;
        Ok(grid)
    }

    fn smoother(&self) -> SmootherConfig {
        SmootherConfig::new(self.scheme.kind()).with_pcg_iters(self.pcg_iters)
    }

    fn cycle_spec(&self) -> CycleSpec {
        CycleSpec::new(self.cycle, self.nu)
            .with_tol(self.tol)
            .with_seed(self.seed)
    }

    fn field_or(&self, path: &Option<PathBuf>, grid: GridSpec, default: impl Fn(f64, f64) -> f64) -> Result<ScalarField, CliError> {
        match path {
            Some(p) => {
                let field = read_field(p)?;
                if field.grid() != grid {
                    return Err(Error::GridMismatch {
                        left: grid.n(),
                        right: field.grid().n(),
                    }
                    .into());
                }
                Ok(field)
            }
            None => Ok(ScalarField::from_fn(grid, default)),
        }
    }
}

/// Plain-text field dump: `N <n>` followed by one `i j value` line per interior node.
pub fn format_field(field: &ScalarField) -> String {
    let grid = field.grid();
    let mut s = String::with_capacity(32 * grid.len());
    let _ = writeln!(s, "N {}", grid.n());
    for (k, v) in field.values().iter().enumerate() {
        let (i, j) = grid.coords(k);
        let _ = writeln!(s, "{i} {j} {v:.16e}");
    }
    s
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<(), CliError> {
    fs::write(path, format_field(field)).map_err(io_err(format!("writing {}", path.display())))
}

pub fn parse_field(text: &str) -> Result<ScalarField, CliError> {
    let bad = |line: usize, what: &str| CliError::Usage(format!("field dump line {line}: {what}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing `N <n>` header"))?;
    let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["N", n] => n.parse::<usize>().map_err(|_| bad(1, "bad grid size"))?,
        _ => return Err(bad(1, "expected `N <n>`")),
    };
    let grid = GridSpec::new(n)?;
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = 0;
    for (ln, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [i, j, v] = parts.as_slice() else {
            return Err(bad(ln + 1, "expected `i j value`"));
        };
        let (i, j): (usize, usize) = (
            i.parse().map_err(|_| bad(ln + 1, "bad index"))?,
            j.parse().map_err(|_| bad(ln + 1, "bad index"))?,
        );
        if !(1..=grid.side()).contains(&i) || !(1..=grid.side()).contains(&j) {
            return Err(bad(ln + 1, "index outside the interior"));
        }
        let slot = &mut values[grid.index(i, j)];
        if !slot.is_nan() {
            return Err(bad(ln + 1, "duplicate node"));
        }
        *slot = v.parse().map_err(|_| bad(ln + 1, "bad value"))?;
        seen += 1;
    }
    if seen != grid.len() {
        return Err(Error::SizeMismatch {
            expected: grid.len(),
            found: seen,
        }
        .into());
    }
    Ok(ScalarField::from_vec(grid, values)?)
}

pub fn read_field(path: &Path) -> Result<ScalarField, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    parse_field(&text)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Io {
        context: format!("writing {}", path.display()),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(format!("writing {}", path.display())))
}

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn cmd_lfa(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let h = cfg.h.unwrap_or(1.0 / cfg.n as f64);
    let params = LfaParams::new(cfg.q, cfg.alpha, h)?;
    let (scheme, closed) = match cfg.scheme {
        SchemeArg::Cjr => {
            let r = cjr_optimal(&params);
            (Scheme::Cjr, (r.omega, r.mu))
        }
        SchemeArg::Bsr | SchemeArg::Ibsr => (Scheme::Bsr, bsr_damping(cfg.q)?),
    };
    let sampled = optimize_sampled(scheme, &params)?;
    let gamma = params.gamma();
    let mut out = String::new();
    let _ = writeln!(out, "scheme {:?} q {} alpha {:e} h {} gamma {:.6e}", cfg.scheme, cfg.q, cfg.alpha, h, gamma);
    if cfg.scheme == SchemeArg::Cjr {
        let threshold = crate::lfa::cjr_gamma_threshold(cfg.coarsening()?);
        let branch = if gamma <= threshold { "jacobi" } else { "omega0" };
        let _ = writeln!(out, "branch {branch} (threshold {threshold:.6})");
    }
    let _ = writeln!(out, "closed  omega {:.6} mu {:.6}", closed.0, closed.1);
    let _ = writeln!(out, "sampled omega {:.6} mu {:.6}", sampled.omega, sampled.mu);
    let _ = writeln!(out, "diff    omega {:.3e} mu {:.3e}", (sampled.omega - closed.0).abs(), (sampled.mu - closed.1).abs());
    let _ = writeln!(
        out,
        "argmax theta ({:.6}, {:.6})",
        sampled.arg_theta.theta1, sampled.arg_theta.theta2
    );
    if let Some(path) = &cfg.out {
        write_csv(
            path,
            &["scheme", "q", "alpha", "h", "omega_closed", "mu_closed", "omega_sampled", "mu_sampled"],
            &[vec![
                format!("{:?}", cfg.scheme).to_lowercase(),
                cfg.q.to_string(),
                sig17(cfg.alpha),
                sig17(h),
                sig17(closed.0),
                sig17(closed.1),
                sig17(sampled.omega),
                sig17(sampled.mu),
            ]],
        )?;
    }
    Ok(out)
}

pub fn cmd_mg(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let grid = cfg.grid()?;
    let problem = Manufactured::new(cfg.alpha);
    let f = cfg.field_or(&cfg.f, grid, |x, y| problem.f(x, y))?;
    let g = cfg.field_or(&cfg.g, grid, |x, y| problem.g(x, y))?;
    let op = SaddleOperator::new(grid, cfg.alpha, None)?;
    let hier = Hierarchy::new(op, cfg.coarsening()?, &cfg.smoother())?;
    let report = solve(&hier, &crate::grid::BlockField::new(f, g)?, &cfg.cycle_spec())?;

    if let Some(path) = &cfg.out {
        let r0 = report.history[0];
        let rows: Vec<Vec<String>> = report
            .history
            .iter()
            .enumerate()
            .map(|(k, &r)| vec![k.to_string(), sig17(r), sig17(if r0 > 0.0 { r / r0 } else { 0.0 })])
            .collect();
        write_csv(path, &["iter", "residual_norm", "rel_residual"], &rows)?;
    }
    let mut out = String::new();
    let _ = writeln!(out, "levels {:?}", hier.grid_sizes());
    let _ = writeln!(out, "iterations {}", report.iterations);
    let _ = writeln!(out, "rho {:.3}", report.rho);
    let _ = writeln!(out, "converged {}", report.converged);
    if cfg.f.is_none() && cfg.g.is_none() {
        let _ = writeln!(out, "error {:.6e}", problem.error(&report.v));
    }
    if !report.converged {
        return Err(CliError::Solver(Error::MultigridDiverged {
            iterations: report.iterations,
            relative_residual: report.relative_residual(),
        }));
    }
    Ok(out)
}

pub fn cmd_ssn(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let grid = cfg.grid()?;
    let cp = ControlParams::new(cfg.alpha, cfg.beta, cfg.u0, cfg.u1)?;
    let f = cfg.field_or(&cfg.f, grid, |_, _| 0.0)?;
    let g = cfg.field_or(&cfg.g, grid, sparse_control_target)?;
    let data = ProblemData::new(f, g)?;
    let mut opts = SsnOptions::new(cfg.coarsening()?, cfg.smoother(), cfg.cycle, cfg.nu);
    opts.mg_tol = cfg.tol;
    opts.tol = cfg.tol;
    let report = ssn_solve(&data, &cp, &opts)?;

    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
        write_field(&dir.join("u.txt"), &report.u)?;
        write_field(&dir.join("y.txt"), &report.state.y)?;
        write_field(&dir.join("p.txt"), &report.state.p)?;
        let rows: Vec<Vec<String>> = report
            .state
            .residual_history
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let mg = if k == 0 { report.unconstrained_mg_iterations } else { report.mg_iterations[k - 1] };
                let t = if k == 0 { 0.0 } else { report.step_lengths[k - 1] };
                vec![k.to_string(), mg.to_string(), sig17(r), sig17(t)]
            })
            .collect();
        write_csv(&dir.join("ssn.csv"), &["iter", "mg_iterations", "residual_norm", "step"], &rows)?;
    }
    let mut out = String::new();
    let _ = writeln!(out, "ssn_iterations {}", report.state.iterations);
    let _ = writeln!(out, "mg_iterations {:?}", report.mg_iterations);
    let _ = writeln!(out, "unconstrained_mg_iterations {}", report.unconstrained_mg_iterations);
    let _ = writeln!(out, "sparsity_fraction {:.6}", report.sparsity_fraction());
    let _ = writeln!(out, "active_fraction {:.6}", report.active_fraction(&cp));
    let _ = writeln!(out, "converged {}", report.converged);
    if !report.converged {
        return Err(CliError::Solver(Error::LineSearchFailed {
            iteration: report.state.iterations,
            halvings: opts.max_halvings,
        }));
    }
    Ok(out)
}

/// One CSV row per cell; failed cells keep their row with the error text.
pub fn repro_rows(cells: &[CellSpec]) -> Vec<Vec<String>> {
    let results = run_cells(cells);
    cells
        .iter()
        .zip(results)
        .map(|(c, r)| {
            let cycle = match c.cycle {
                CycleType::V => "V",
                CycleType::W => "W",
            };
            let mu = mu_pred(c).map(|m| format!("{m:.3}")).unwrap_or_else(|e| format!("error: {e}"));
            let rho = match r {
                Ok(r) if r.converged => format!("{:.3}", r.rho),
                Ok(r) => format!("diverged: {:.3}", r.rho),
                Err(e) => format!("error: {e}"),
            };
            vec![
                c.q.to_string(),
                c.n.to_string(),
                c.scheme_label(),
                c.nu.to_string(),
                cycle.to_string(),
                mu,
                rho,
                format!("{:e}", c.alpha),
            ]
        })
        .collect()
}

pub const REPRO_HEADER: [&str; 8] = ["q", "N", "scheme", "nu", "cycle", "mu_pred", "rho_measured", "alpha"];

pub fn cmd_repro(target: ReproTarget, out: Option<PathBuf>) -> Result<String, CliError> {
    let cells = match target {
        ReproTarget::Table1 => table1_cells(),
        ReproTarget::Table2 => table2_cells(),
        ReproTarget::Sweep => sweep_cells(),
    };
    let rows = repro_rows(&cells);
    let path = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", target.name())));
    write_csv(&path, &REPRO_HEADER, &rows)?;
    let mut s = String::new();
    let _ = writeln!(s, "{}", REPRO_HEADER.join(","));
    for row in &rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    let _ = writeln!(s, "wrote {}", path.display());
    Ok(s)
}

fn configure_workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    configure_workers()?;
    match cli.command {
        Command::Lfa(a) => cmd_lfa(&a.resolve()?),
        Command::Mg(a) => cmd_mg(&a.resolve()?),
        Command::Ssn(a) => cmd_ssn(&a.resolve()?),
        Command::Repro { target, out } => cmd_repro(target, out),
    }
}

/// Parses `args`, runs the command and maps failures to exit codes
/// (1 for invalid input, 2 for solver failure).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_dump_round_trip() {
        let grid = GridSpec::new(4).unwrap();
        let f = ScalarField::from_fn(grid, |x, y| x * 1e-3 + y.sin());
        let text = format_field(&f);
        assert!(text.starts_with("N 4\n1 1 "));
        assert_eq!(text.lines().count(), 10);
        assert_eq!(parse_field(&text).unwrap(), f);
    }

    #[test]
    fn field_dump_rejects_malformed_input() {
        assert!(parse_field("").is_err());
        assert!(parse_field("M 4\n").is_err());
        assert!(parse_field("N 2\n1 1 0.5\n1 1 0.5\n").is_err());
        assert!(parse_field("N 2\n2 1 0.5\n").is_err());
        assert!(parse_field("N 3\n1 1 0.5\n").is_err());
    }

    #[test]
    fn error_classes() {
        assert_eq!(CliError::from(Error::NotDivisible { n: 255, q: 2 }).exit_code(), 1);
        assert_eq!(CliError::from(Error::Singular).exit_code(), 2);
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from(["ocmg", "mg", "--scheme", "ibsr", "--N", "64", "--cycle", "V", "--u0", "-5"]).unwrap();
        let Command::Mg(args) = cli.command else { panic!() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.scheme, SchemeArg::Ibsr);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.cycle, CycleType::V);
        assert_eq!(cfg.u0, -5.0);
        assert_eq!(cfg.tol, 1e-10);
        assert_eq!(cfg.pcg_iters, 2);
    }
}
