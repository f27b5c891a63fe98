//! Command-line front end: hypothesis checks, symmetrizer diagnostics,
//! solves, strictification sweeps, and derived-problem emission.
//!
//! Exit codes: 0 pass, 1 mathematical failure, 2 usage / parse error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::hyperpoly::{estimate_co_constant, CoConstant, HyperError, Tolerances};
use crate::problem::Problem;
use crate::problem_file::ProblemFile;
use crate::solver::{
    check_l1_hypotheses, derived_operator, nuij_sweep, solve, verify_energy_estimate, Grid,
    L1Report, ProperEntry, SolverError,
};
use crate::symmetrizer::{
    assemble_block_system, sylvester_block, verify_bounds, BoundCeilings, BoundReport,
};

#[derive(Parser)]
#[command(name = "hyp1d", version, about = "Hyperbolic Cauchy problems in one space variable")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the hypotheses (real roots, bounded co-constant, proper
    /// decomposability) on a sample grid.
    Check {
        file: PathBuf,
        /// Spatial sample count (overrides the file's check.nx).
        #[arg(long)]
        grid: Option<usize>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the symmetrizer (Q, Psi, roots) at sampled points and the
    /// empirical bound constants.
    Symmetrizer {
        file: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        /// RNG seed for the random-vector bound estimates.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the problem and write the energy trace.
    Solve {
        file: PathBuf,
        /// Energy-trace CSV path.
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
        /// Skip the hypothesis pre-check.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Solve with strictified principal parts for each epsilon and report
    /// inter-solution distances.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the problem solved by u_x as a new problem file.
    L1 {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap's own exit code convention: 0 for --help/--version
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Check { file, grid, out } => cmd_check(&file, grid, out.as_deref()),
        Command::Symmetrizer {
            file,
            grid,
            seed,
            out,
        } => cmd_symmetrizer(&file, grid, seed, out.as_deref()),
        Command::Solve {
            file,
            out,
            force,
            grid,
        } => cmd_solve(&file, &out, force, grid),
        Command::Sweep { file, out } => cmd_sweep(&file, out.as_deref()),
        Command::L1 { file, out } => cmd_l1(&file, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CmdError::Math(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

enum CmdError {
    Usage(String),
    Math(String),
}

impl From<crate::problem_file::FileError> for CmdError {
    fn from(e: crate::problem_file::FileError) -> Self {
        CmdError::Usage(e.to_string())
    }
}

fn load(path: &Path) -> Result<(ProblemFile, Problem), CmdError> {
    let pf = ProblemFile::load(path)?;
    let problem = pf.to_problem()?;
    Ok((pf, problem))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CmdError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CmdError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct RootsReal {
    pass: bool,
    fail_x: Option<f64>,
    imag: Option<f64>,
}

#[derive(Serialize)]
struct CoConstantReport {
    bounded: bool,
    m_const: Option<f64>,
    fail_x: Option<f64>,
}

#[derive(Serialize)]
struct CheckReport {
    roots_real: RootsReal,
    co_constant: CoConstantReport,
    lower_order: Vec<ProperEntry>,
    derived_lower_order: Vec<ProperEntry>,
    pass: bool,
}

fn run_check(
    pf: &ProblemFile,
    problem: &Problem,
    nx: usize,
    tol: &Tolerances,
) -> Result<CheckReport, CmdError> {
    let xs = pf.sample_xs(nx);
    let mut hyp_a = RootsReal {
        pass: true,
        fail_x: None,
        imag: None,
    };
    for &x in &xs {
        match problem.principal.roots_at(x, tol) {
            Ok(_) => {}
            Err(HyperError::NotHyperbolic { x, imag }) => {
                hyp_a = RootsReal {
                    pass: false,
                    fail_x: Some(x),
                    imag: Some(imag),
                };
                break;
            }
            Err(e) => return Err(CmdError::Usage(e.to_string())),
        }
    }
    let hyp_b = if hyp_a.pass {
        match estimate_co_constant(&problem.principal, &xs, tol)
            .map_err(|e| CmdError::Usage(e.to_string()))?
        {
            CoConstant::Bounded { m_const } => CoConstantReport {
                bounded: true,
                m_const: Some(m_const),
                fail_x: None,
            },
            CoConstant::Unbounded { x } => CoConstantReport {
                bounded: false,
                m_const: None,
                fail_x: Some(x),
            },
        }
    } else {
        CoConstantReport {
            bounded: false,
            m_const: None,
            fail_x: None,
        }
    };
    let l1: L1Report = if hyp_a.pass {
        check_l1_hypotheses(problem, &pf.sample_grid(nx), tol)
            .map_err(|e| CmdError::Usage(e.to_string()))?
    } else {
        L1Report {
            base: Vec::new(),
            derived: Vec::new(),
            pass: false,
        }
    };
    let pass = hyp_a.pass && hyp_b.bounded && l1.pass;
    Ok(CheckReport {
        roots_real: hyp_a,
        co_constant: hyp_b,
        lower_order: l1.base,
        derived_lower_order: l1.derived,
        pass,
    })
}

fn cmd_check(path: &Path, grid: Option<usize>, out: Option<&Path>) -> Result<i32, CmdError> {
    let (pf, problem) = load(path)?;
    let tol = Tolerances::default();
    let report = run_check(&pf, &problem, grid.unwrap_or(pf.check.nx), &tol)?;
    emit(out, &to_json(&report))?;
    Ok(if report.pass { 0 } else { 1 })
}

#[derive(Serialize)]
struct SymmetrizerPoint {
    x: f64,
    roots: Vec<f64>,
    q: Vec<Vec<f64>>,
    psi: Vec<f64>,
}

#[derive(Serialize)]
struct SymmetrizerReport {
    points: Vec<SymmetrizerPoint>,
    bounds: BoundReport,
}

fn cmd_symmetrizer(
    path: &Path,
    grid: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> Result<i32, CmdError> {
    let (pf, problem) = load(path)?;
    let tol = Tolerances::default();
    let nx = grid.unwrap_or(pf.check.nx);
    let xs = pf.sample_xs(nx);
    let mut points = Vec::new();
    for &x in &xs {
        let pt = problem
            .principal
            .roots_at(x, &tol)
            .map_err(|e| CmdError::Math(e.to_string()))?;
        let blk = sylvester_block(&pt);
        points.push(SymmetrizerPoint {
            x,
            roots: pt.roots.clone(),
            q: (0..problem.m)
                .map(|i| (0..problem.m).map(|j| blk.q[(i, j)]).collect())
                .collect(),
            psi: blk.psi.iter().copied().collect(),
        });
    }
    let bs = assemble_block_system(&problem, &xs, &tol)
        .map_err(|e| CmdError::Math(e.to_string()))?;
    let bounds = verify_bounds(
        &bs,
        &pf.sample_grid(nx),
        pf.check.n_random_v,
        seed,
        &BoundCeilings::default(),
    )
    .map_err(|e| CmdError::Math(e.to_string()))?;
    let report = SymmetrizerReport { points, bounds };
    let pass = report.bounds.all_pass();
    emit(out, &to_json(&report))?;
    Ok(if pass { 0 } else { 1 })
}

#[derive(Serialize)]
struct SolveSummary {
    c_emp: f64,
    energy_initial: f64,
    energy_final: f64,
    pass: bool,
}

fn cmd_solve(path: &Path, out: &Path, force: bool, grid: Option<usize>) -> Result<i32, CmdError> {
    let (pf, problem) = load(path)?;
    let tol = Tolerances::default();
    if !force {
        let report = run_check(&pf, &problem, grid.unwrap_or(pf.check.nx), &tol)?;
        if !report.pass {
            eprint!("{}", to_json(&report));
            return Err(CmdError::Math(
                "hypothesis check failed (rerun with --force to solve anyway)".into(),
            ));
        }
    }
    let tau_max = grid_tau_max(&pf, &problem, &tol)?;
    let g = Grid::new(problem.domain, pf.grid.dx, pf.grid.cfl, tau_max, problem.t_end)
        .map_err(|e| CmdError::Usage(e.to_string()))?;
    let (trace, _) = solve(&problem, &g, &tol).map_err(solver_to_cmd)?;
    std::fs::write(out, trace.to_csv())
        .map_err(|e| CmdError::Usage(format!("cannot write {}: {e}", out.display())))?;
    let verdict = verify_energy_estimate(&trace, None);
    let summary = SolveSummary {
        c_emp: verdict.c_emp,
        energy_initial: trace.rows.first().map_or(0.0, |r| r.energy),
        energy_final: trace.rows.last().map_or(0.0, |r| r.energy),
        pass: verdict.pass,
    };
    print!("{}", to_json(&summary));
    Ok(if summary.pass { 0 } else { 1 })
}

fn grid_tau_max(
    pf: &ProblemFile,
    problem: &Problem,
    tol: &Tolerances,
) -> Result<f64, CmdError> {
    let mut tau_max = 0.0f64;
    for x in pf.sample_xs(pf.check.nx) {
        let pt = problem
            .principal
            .roots_at(x, tol)
            .map_err(|e| CmdError::Math(e.to_string()))?;
        for r in &pt.roots {
            tau_max = tau_max.max(r.abs());
        }
    }
    Ok(tau_max)
}

fn solver_to_cmd(e: SolverError) -> CmdError {
    match e {
        SolverError::CflViolation { .. } | SolverError::Validation(_) => {
            CmdError::Usage(e.to_string())
        }
        other => CmdError::Math(other.to_string()),
    }
}

fn cmd_sweep(path: &Path, out: Option<&Path>) -> Result<i32, CmdError> {
    let (pf, problem) = load(path)?;
    if pf.epsilons.is_empty() {
        return Err(CmdError::Usage("sweep requires a non-empty `epsilons` list".into()));
    }
    let tol = Tolerances::default();
    let tau_max = grid_tau_max(&pf, &problem, &tol)?;
    // strictification enlarges the roots by O(eps); pad the CFL speed
    let pad = 1.0 + pf.epsilons.iter().cloned().fold(0.0, f64::max);
    let g = Grid::new(
        problem.domain,
        pf.grid.dx,
        pf.grid.cfl,
        tau_max * pad + pad,
        problem.t_end,
    )
    .map_err(|e| CmdError::Usage(e.to_string()))?;
    let report = nuij_sweep(&problem, &g, &pf.epsilons, &tol).map_err(solver_to_cmd)?;
    emit(out, &to_json(&report))?;
    Ok(0)
}

fn cmd_l1(path: &Path, out: Option<&Path>) -> Result<i32, CmdError> {
    let (pf, problem) = load(path)?;
    let (derived, _) = derived_operator(&problem);
    let doc = ProblemFile::from_problem(&derived, &pf);
    let text = toml::to_string_pretty(&doc)
        .map_err(|e| CmdError::Usage(format!("cannot serialize derived problem: {e}")))?;
    emit(out, &text)?;
    Ok(0)
}
