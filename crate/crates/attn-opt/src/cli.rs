//! Command-line front end. Structured results go to standard output as
//! JSON, tables go to CSV files in the output directory, and diagnostics
//! go to standard error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::assumptions::classify;
use crate::binary_choice::{solve_stopping_boundary, BinaryChoiceProblem};
use crate::error::{invalid, Error};
use crate::gaussian::Problem;
use crate::io::{parse_grid, policy_table, stage_path_value, write_csv, ProblemFile};
use crate::manipulation::{compare_cumulative, manipulated_stages};
use crate::news::{equilibrium, verify_equilibrium};
use crate::oracle::{monotonicity_scan, t_optimal};
use crate::sim::simulate;
use crate::stages::solve_stages;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "ATTN_OPT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "attn-opt", version, about = "Optimal attention allocation across Gaussian information sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Directory for CSV output.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Time grid `a:b:step`.
    #[arg(long)]
    grid: Option<String>,
    /// Fail with exit code 3 when no sufficient condition covers the prior.
    #[arg(long)]
    require_theorem: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report which sufficient conditions the prior satisfies.
    Check(Common),
    /// Compute the optimal stage path.
    Solve(Common),
    /// Minimize posterior variance for one budget.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Attention budget.
        #[arg(long)]
        t: f64,
    },
    /// Look for coordinates of n(t) that decrease along a grid.
    Scan(Common),
    /// Stopping boundary and choice accuracy for two goods.
    BinaryChoice(Common),
    /// Closed-form news equilibrium and its grid certificate.
    NewsEq(Common),
    /// Effect of forcing attention to source 0.
    Manipulate(Common),
    /// Monte Carlo replay of the optimal policy.
    Simulate(Common),
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid(_) | Error::WrongDimension(_) | Error::NonPd | Error::Domain(_) | Error::InfeasibleFloor => {
                EXIT_INVALID
            }
            Error::UnsupportedPrior => EXIT_UNSUPPORTED,
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Output of a successful command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub json: Value,
    pub code: i32,
    pub files: Vec<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    configure_threads();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.json).expect("values always serialize");
            // A closed pipe downstream is not an error of this program.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            out.code
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_VAR).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn load(c: &Common) -> CliResult<(ProblemFile, Problem)> {
    let file = ProblemFile::read(&c.input)?;
    let p = file.problem()?;
    Ok((file, p))
}

fn out_file(c: &Common, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&c.out).map_err(|e| invalid(format!("{}: {e}", c.out.display())))?;
    Ok(c.out.join(name))
}

fn grid_or(c: &Common, fallback: Option<&str>) -> CliResult<Option<Vec<f64>>> {
    match c.grid.as_deref().or(fallback) {
        Some(s) => Ok(Some(parse_grid(s)?)),
        None => Ok(None),
    }
}

fn require_supported(p: &Problem) -> CliResult<()> {
    if classify(p).supported() {
        Ok(())
    } else {
        Err(Error::UnsupportedPrior.into())
    }
}

fn execute(cmd: Command) -> CliResult<Outcome> {
    match cmd {
        Command::Check(c) => {
            let (_, p) = load(&c)?;
            let report = classify(&p);
            let code = if c.require_theorem && !report.supported() { EXIT_UNSUPPORTED } else { EXIT_OK };
            Ok(Outcome { json: serde_json::to_value(report).expect("report serializes"), code, files: vec![] })
        }
        Command::Solve(c) => {
            let (_, p) = load(&c)?;
            require_supported(&p)?;
            let path = solve_stages(&p)?;
            let mut files = vec![];
            if let Some(grid) = grid_or(&c, None)? {
                let (header, rows) = policy_table(&path, &grid);
                let f = out_file(&c, "solve.csv")?;
                write_csv(&f, &header, &rows)?;
                files.push(f);
            }
            Ok(Outcome { json: stage_path_value(&path), code: EXIT_OK, files })
        }
        Command::Oracle { common, t } => {
            let (_, p) = load(&common)?;
            if common.require_theorem {
                require_supported(&p)?;
            }
            let o = t_optimal(&p, t)?;
            Ok(Outcome { json: serde_json::to_value(o).expect("result serializes"), ..Outcome::default() })
        }
        Command::Scan(c) => {
            let (_, p) = load(&c)?;
            if c.require_theorem {
                require_supported(&p)?;
            }
            let grid = grid_or(&c, Some("0.1:10:0.1"))?.expect("fallback grid");
            let v = monotonicity_scan(&p, &grid)?;
            let rows: Vec<Value> =
                v.iter().map(|x| json!({"source": x.source, "t": x.t, "t_next": x.t_next, "drop": x.drop})).collect();
            Ok(Outcome { json: json!({"uniformly_optimal": rows.is_empty(), "violations": rows}), ..Outcome::default() })
        }
        Command::BinaryChoice(c) => binary_choice(&c),
        Command::NewsEq(c) => {
            let file = ProblemFile::read(&c.input)?;
            let block = file.news_game.ok_or_else(|| invalid("problem file has no news_game block"))?;
            let g = block.params()?;
            let eq = equilibrium(&g)?;
            let rep = verify_equilibrium(&g, block.grid.unwrap_or(200))?;
            let json = json!({
                "params": g,
                "incentive_index": g.incentive_index(),
                "outcome": eq,
                "verification": rep,
            });
            Ok(Outcome { json, ..Outcome::default() })
        }
        Command::Manipulate(c) => manipulate(&c),
        Command::Simulate(c) => sim(&c),
    }
}

fn binary_choice(c: &Common) -> CliResult<Outcome> {
    let (file, p) = load(c)?;
    let block = file.binary_choice.clone().ok_or_else(|| invalid("problem file has no binary_choice block"))?;
    if p.dim() != 2 {
        return Err(Error::WrongDimension("binary choice needs two sources".into()).into());
    }
    let a = p.alpha();
    let b = BinaryChoiceProblem::new(p.sigma().clone(), [a[0], a[1]], block.cost).map_err(|e| match e {
        Error::AssumptionViolated(m) => CliError { code: EXIT_UNSUPPORTED, message: format!("assumption violated: {m}") },
        other => other.into(),
    })?;
    let grid = block.grid.as_ref().map(|g| g.to_grid()).unwrap_or_default();
    let sol = solve_stopping_boundary(&b, grid)?;
    let rows: Vec<Vec<f64>> = (0..sol.time_grid.len())
        .map(|n| vec![sol.time_grid[n], sol.variance[n], sol.boundary[n], sol.accuracy[n]])
        .collect();
    let f = out_file(c, "binary_choice.csv")?;
    write_csv(&f, &["t", "sigma2", "k_star", "p"].map(String::from), &rows)?;
    let json = json!({
        "swapped": b.swapped(),
        "switch_time": b.switch_time(),
        "prior_variance": b.prior_variance(),
        "v_star": b.v_star(),
        "boundary_at_zero": sol.boundary[0],
        "accuracy_at_zero": sol.accuracy[0],
        "dy": sol.dy,
        "steps": sol.steps,
        "t_max": sol.t_max,
    });
    Ok(Outcome { json, code: EXIT_OK, files: vec![f] })
}

fn manipulate(c: &Common) -> CliResult<Outcome> {
    let (file, p) = load(c)?;
    let block = file.manipulation.clone().ok_or_else(|| invalid("problem file has no manipulation block"))?;
    require_supported(&p)?;
    let grid = grid_or(c, block.t_grid.as_deref().or(Some("0:5:0.01")))?.expect("fallback grid");
    let path = manipulated_stages(&p, block.duration)?;
    let rep = compare_cumulative(&p, block.duration, &grid)?;
    let k = p.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|i| format!("diff_{i}")));
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .map(|n| std::iter::once(grid[n]).chain(rep.diffs.iter().map(|d| d[n])).collect())
        .collect();
    let f = out_file(c, "manipulate.csv")?;
    write_csv(&f, &header, &rows)?;
    let json = json!({
        "T": rep.duration,
        "T_star": rep.catch_up,
        "substitutes": rep.substitutes,
        "increases": rep.increases,
        "manipulated_path": stage_path_value(&path),
    });
    Ok(Outcome { json, code: EXIT_OK, files: vec![f] })
}

fn sim(c: &Common) -> CliResult<Outcome> {
    let (file, p) = load(c)?;
    let block = file.sim.clone().ok_or_else(|| invalid("problem file has no sim block"))?;
    require_supported(&p)?;
    let path = solve_stages(&p)?;
    let cfg = block.config(c.seed);
    let res = simulate(&p, &path, &cfg)?;
    let summary: Vec<Vec<f64>> = (0..res.times.len())
        .map(|m| {
            vec![
                res.times[m],
                res.empirical_mean[m],
                res.mean_se[m],
                res.empirical_variance[m],
                res.variance_se[m],
                res.analytic_variance[m],
                res.posterior_variance[m],
            ]
        })
        .collect();
    let header = ["t", "mean", "mean_se", "variance", "variance_se", "analytic_variance", "posterior_variance"]
        .map(String::from);
    let f1 = out_file(c, "simulate.csv")?;
    write_csv(&f1, &header, &summary)?;
    let mut theader = vec!["t".to_string()];
    theader.extend((0..cfg.n_paths).map(|j| format!("path_{j}")));
    let traj: Vec<Vec<f64>> = (0..res.times.len())
        .map(|m| std::iter::once(res.times[m]).chain(res.mean_trajectories.iter().map(|tr| tr[m])).collect())
        .collect();
    let f2 = out_file(c, "trajectories.csv")?;
    write_csv(&f2, &theader, &traj)?;
    let within: Vec<bool> = (0..res.times.len())
        .map(|m| (res.empirical_variance[m] - res.analytic_variance[m]).abs() <= 3.0 * res.variance_se[m])
        .collect();
    let json = json!({
        "config": cfg,
        "prior_mean": res.prior_mean,
        "times": res.times,
        "empirical_mean": res.empirical_mean,
        "empirical_variance": res.empirical_variance,
        "analytic_variance": res.analytic_variance,
        "within_three_se": within,
    });
    Ok(Outcome { json, code: EXIT_OK, files: vec![f1, f2] })
}

/// Runs a command on an already-parsed argument list and returns its
/// outcome instead of printing it.
pub fn run_captured<I, T>(argv: I) -> std::result::Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError { code: EXIT_INVALID, message: e.to_string() })?;
    execute(cli.command)
}
