//! First-order reduction of the scalar problem and its finite-difference
//! integration: Lax-Friedrichs stepping, energies on shrinking cones,
//! empirical verification of the a-priori estimate, the derived operator for
//! `u_x`, and sweeps over strictified principal parts.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::decomposition::{check_proper, DecompError, ProperCheck};
use crate::expr::{Expr, ExprError, Var};
use crate::hyperpoly::{HPoly, HyperError, Tolerances};
use crate::problem::Problem;
use crate::symmetrizer::{assemble_block_system, BlockSystem};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("CFL violation: requested number {requested}, allowed at most {max}")]
    CflViolation { requested: f64, max: f64 },
    #[error("cone of dependence is exhausted before t = {t_end} (max horizon {max})")]
    ConeExhausted { t_end: f64, max: f64 },
    #[error("non-finite value at step {step}, node {node}")]
    NonFinite { step: usize, node: usize },
    #[error("invalid problem: {0}")]
    Validation(String),
    #[error(transparent)]
    Hyper(#[from] HyperError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
}

impl From<ExprError> for SolverError {
    fn from(e: ExprError) -> Self {
        SolverError::Hyper(HyperError::from(e))
    }
}

/// Uniform space-time grid; `dt` is rounded so the horizon is hit exactly
/// while respecting the CFL bound.
#[derive(Debug, Clone)]
pub struct Grid {
    pub dx: f64,
    pub dt: f64,
    pub cfl: f64,
    pub x_lo: f64,
    pub n_nodes: usize,
    pub n_steps: usize,
}

impl Grid {
    pub fn new(
        domain: (f64, f64),
        dx: f64,
        cfl: f64,
        tau_max: f64,
        t_end: f64,
    ) -> Result<Grid, SolverError> {
        if !(cfl > 0.0 && cfl <= 0.9) {
            return Err(SolverError::CflViolation {
                requested: cfl,
                max: 0.9,
            });
        }
        let n_nodes = ((domain.1 - domain.0) / dx).round() as usize + 1;
        let dt_max = if tau_max > 0.0 {
            cfl * dx / tau_max
        } else {
            cfl * dx
        };
        let n_steps = (t_end / dt_max).ceil() as usize;
        Ok(Grid {
            dx,
            dt: t_end / n_steps as f64,
            cfl,
            x_lo: domain.0,
            n_nodes,
            n_steps,
        })
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.node(i)).collect()
    }
}

/// One recorded time level of the trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub energy: f64,
    pub forcing_norm: f64,
    /// `||d_t^d u||^2` over the cone, `d = 0 .. m-1`.
    pub dt_norms: Vec<f64>,
    pub cone_lo: f64,
    pub cone_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyTrace {
    pub m: usize,
    pub rows: Vec<TraceRow>,
}

impl EnergyTrace {
    /// Stable CSV schema: `t, energy, forcing_norm, dt0 .. dt{m-1},
    /// cone_lo, cone_hi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,energy,forcing_norm");
        for d in 0..self.m {
            out.push_str(&format!(",dt{d}"));
        }
        out.push_str(",cone_lo,cone_hi\n");
        for r in &self.rows {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e}", r.t, r.energy, r.forcing_norm));
            for v in &r.dt_norms {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push_str(&format!(",{:.12e},{:.12e}\n", r.cone_lo, r.cone_hi));
        }
        out
    }
}

/// The stacked state at `t = 0`: entry `(component, node)`, with the mixed
/// derivatives produced symbolically from the data.
pub fn initial_state(problem: &Problem, grid: &Grid) -> Result<DMatrix<f64>, SolverError> {
    let m = problem.m;
    let n = problem.system_dim();
    // u_{d,j}(0, x) = d_x^{d-j} phi_j
    let mut exprs = Vec::with_capacity(n);
    for d in 0..m {
        for j in 0..=d {
            let mut e = problem.initial[j].clone();
            for _ in 0..d - j {
                e = e.diff(Var::X);
            }
            exprs.push(e);
        }
    }
    let mut u0 = DMatrix::zeros(n, grid.n_nodes);
    for i in 0..grid.n_nodes {
        let x = grid.node(i);
        for (c, e) in exprs.iter().enumerate() {
            u0[(c, i)] = e.eval(0.0, x)?;
        }
    }
    Ok(u0)
}

/// Cone node-index bounds at time `t`, snapped inward; `None` when empty.
fn cone_indices(problem: &Problem, grid: &Grid, tau_max: f64, t: f64) -> Option<(usize, usize)> {
    let rho = problem.rho0 - tau_max * t;
    if rho <= 0.0 {
        return None;
    }
    let lo = (problem.x0 - rho - grid.x_lo) / grid.dx;
    let hi = (problem.x0 + rho - grid.x_lo) / grid.dx;
    let lo = (lo - 1e-9).ceil().max(0.0) as usize;
    let hi = ((hi + 1e-9).floor() as isize).min(grid.n_nodes as isize - 1);
    if hi < lo as isize {
        return None;
    }
    Some((lo, hi as usize))
}

fn trapezoid_weight(i: usize, lo: usize, hi: usize) -> f64 {
    if i == lo || i == hi {
        0.5
    } else {
        1.0
    }
}

struct StepContext {
    bs: BlockSystem,
    a_nodes: Vec<DMatrix<f64>>,
    q_nodes: Vec<DMatrix<f64>>,
    b_static: Option<Vec<DMatrix<f64>>>,
    f_static: bool,
}

impl StepContext {
    fn new(problem: &Problem, grid: &Grid, tol: &Tolerances) -> Result<StepContext, SolverError> {
        let xs = grid.nodes();
        let bs = assemble_block_system(problem, &xs, tol)?;
        let mut a_nodes = Vec::with_capacity(grid.n_nodes);
        let mut q_nodes = Vec::with_capacity(grid.n_nodes);
        for &x in &xs {
            a_nodes.push(bs.eval_a(x)?);
            q_nodes.push(bs.eval_q(x)?);
        }
        let b_time_dep = problem
            .lower
            .iter()
            .flatten()
            .any(|e| e.depends_on(Var::T));
        let b_static = if b_time_dep {
            None
        } else {
            let mut v = Vec::with_capacity(grid.n_nodes);
            for &x in &xs {
                v.push(bs.eval_b(0.0, x)?);
            }
            Some(v)
        };
        let f_static = !problem.forcing.depends_on(Var::T);
        Ok(StepContext {
            bs,
            a_nodes,
            q_nodes,
            b_static,
            f_static,
        })
    }
}

/// Integrates the first-order system with the Lax-Friedrichs scheme and
/// records the cone energy per step. Returns the trace and the final state.
pub fn solve(
    problem: &Problem,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<(EnergyTrace, DMatrix<f64>), SolverError> {
    problem.validate().map_err(SolverError::Validation)?;
    let ctx = StepContext::new(problem, grid, tol)?;
    let tau_max = ctx.bs.tau_max;
    if tau_max > 0.0 && problem.t_end > problem.rho0 / tau_max {
        return Err(SolverError::ConeExhausted {
            t_end: problem.t_end,
            max: problem.rho0 / tau_max,
        });
    }
    // CFL with respect to the measured tau_max
    let allowed = if tau_max > 0.0 {
        0.9 * grid.dx / tau_max
    } else {
        f64::INFINITY
    };
    if grid.dt > allowed {
        return Err(SolverError::CflViolation {
            requested: grid.dt,
            max: allowed,
        });
    }

    let n = ctx.bs.n;
    let m = problem.m;
    let nodes = grid.n_nodes;
    let mut u = initial_state(problem, grid)?;
    let mut u_next = DMatrix::zeros(n, nodes);
    let mut rows = Vec::with_capacity(grid.n_steps + 1);
    record_row(problem, grid, &ctx, 0.0, &u, &mut rows)?;

    let lam = grid.dt / (2.0 * grid.dx);
    let forcing_zero = problem.forcing.is_zero_literal();
    let mut f_cache: Vec<f64> = vec![0.0; nodes];
    if ctx.f_static && !forcing_zero {
        for i in 0..nodes {
            f_cache[i] = problem.forcing.eval(0.0, grid.node(i))?;
        }
    }
    let mut b_cache: Vec<DMatrix<f64>> = Vec::new();

    let mut ul = DVector::zeros(n);
    let mut ur = DVector::zeros(n);
    let mut uc = DVector::zeros(n);
    for step in 0..grid.n_steps {
        let t = step as f64 * grid.dt;
        let b_nodes: &[DMatrix<f64>] = match &ctx.b_static {
            Some(v) => v,
            None => {
                b_cache.clear();
                for i in 0..nodes {
                    b_cache.push(ctx.bs.eval_b(t, grid.node(i))?);
                }
                &b_cache
            }
        };
        for i in 0..nodes {
            // zero extension outside the domain
            if i == 0 {
                ul.fill(0.0);
            } else {
                ul.copy_from(&u.column(i - 1));
            }
            if i + 1 == nodes {
                ur.fill(0.0);
            } else {
                ur.copy_from(&u.column(i + 1));
            }
            uc.copy_from(&u.column(i));
            let mut new = 0.5 * (&ul + &ur) + lam * (&ctx.a_nodes[i] * (&ur - &ul))
                + grid.dt * (&b_nodes[i] * &uc);
            if !forcing_zero {
                let fv = if ctx.f_static {
                    f_cache[i]
                } else {
                    problem.forcing.eval(t, grid.node(i))?
                };
                new[n - 1] += grid.dt * fv;
            }
            for c in 0..n {
                if !new[c].is_finite() {
                    return Err(SolverError::NonFinite { step, node: i });
                }
                u_next[(c, i)] = new[c];
            }
        }
        std::mem::swap(&mut u, &mut u_next);
        record_row(problem, grid, &ctx, (step + 1) as f64 * grid.dt, &u, &mut rows)?;
    }
    let _ = m;
    Ok((EnergyTrace { m: problem.m, rows }, u))
}

fn record_row(
    problem: &Problem,
    grid: &Grid,
    ctx: &StepContext,
    t: f64,
    u: &DMatrix<f64>,
    rows: &mut Vec<TraceRow>,
) -> Result<(), SolverError> {
    let m = problem.m;
    let tau_max = ctx.bs.tau_max;
    let Some((lo, hi)) = cone_indices(problem, grid, tau_max, t) else {
        return Ok(());
    };
    let mut energy = 0.0;
    let mut forcing_norm = 0.0;
    let mut dt_norms = vec![0.0; m];
    let forcing_zero = problem.forcing.is_zero_literal();
    for i in lo..=hi {
        let w = trapezoid_weight(i, lo, hi) * grid.dx;
        let ui = u.column(i);
        energy += 0.5 * w * (&ctx.q_nodes[i] * ui).dot(&ui);
        if !forcing_zero {
            let fv = problem.forcing.eval(t, grid.node(i))?;
            forcing_norm += w * fv * fv;
        }
        for d in 0..m {
            let c = ctx.bs.block_range(d).end - 1;
            dt_norms[d] += w * ui[c] * ui[c];
        }
    }
    rows.push(TraceRow {
        t,
        energy,
        forcing_norm,
        dt_norms,
        cone_lo: grid.node(lo),
        cone_hi: grid.node(hi),
    });
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyVerdict {
    pub c_emp: f64,
    /// The same constant on a once-refined grid, when available.
    pub c_emp_refined: Option<f64>,
    pub pass: bool,
}

/// `C_emp = max_t E(t) / (E(0) + int_0^t ||F||^2)`, the empirical constant of
/// the a-priori estimate; `pass` additionally requires stability within a
/// factor 2 under the provided refinement.
pub fn verify_energy_estimate(trace: &EnergyTrace, refined: Option<&EnergyTrace>) -> EnergyVerdict {
    let c_emp = empirical_constant(trace);
    let c_emp_refined = refined.map(empirical_constant);
    let stable = match c_emp_refined {
        Some(c2) => {
            let lo = c_emp.min(c2).max(1e-30);
            let hi = c_emp.max(c2);
            hi / lo <= 2.0
        }
        None => true,
    };
    EnergyVerdict {
        c_emp,
        c_emp_refined,
        pass: c_emp.is_finite() && stable,
    }
}

fn empirical_constant(trace: &EnergyTrace) -> f64 {
    let rows = &trace.rows;
    if rows.is_empty() {
        return 0.0;
    }
    let e0 = rows[0].energy;
    let mut c = 0.0f64;
    let mut forcing_int = 0.0;
    for k in 0..rows.len() {
        if k > 0 {
            let dt = rows[k].t - rows[k - 1].t;
            forcing_int += 0.5 * dt * (rows[k].forcing_norm + rows[k - 1].forcing_norm);
        }
        let denom = (e0 + forcing_int).max(1e-30);
        c = c.max(rows[k].energy / denom);
    }
    c
}

/// The problem solved by `u_x`, plus the correction coefficients
/// `d_x r_{d,0}` that couple its forcing back to the time derivatives of the
/// base solution: `f1 = d_x f + sum_d (d_x r_{d,0}) d_t^d u`. (The lower
/// order terms enter the operator with a minus, so the moved `d_t^d u` term
/// flips sign.)
pub fn derived_operator(problem: &Problem) -> (Problem, Vec<Expr>) {
    let m = problem.m;
    let a = problem.principal.coeff_exprs();
    let mut lower = Vec::with_capacity(m);
    for d in 0..m {
        let mut row = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let base = problem.lower[d][k].clone();
            let term = if d == m - 1 {
                // R_{m-1} - P', with P' the x-derivative symbol of P
                Expr::sub(base, a[k].diff(Var::X))
            } else {
                // R_d + R'_{d+1}
                Expr::add(base, problem.lower[d + 1][k + 1].diff(Var::X))
            };
            row.push(term);
        }
        lower.push(row);
    }
    let corrections: Vec<Expr> = (0..m).map(|d| problem.lower[d][0].diff(Var::X)).collect();
    let derived = Problem {
        m,
        principal: problem.principal.clone(),
        lower,
        forcing: problem.forcing.diff(Var::X),
        initial: problem.initial.iter().map(|p| p.diff(Var::X)).collect(),
        domain: problem.domain,
        x0: problem.x0,
        rho0: problem.rho0,
        t_end: problem.t_end,
    };
    (derived, corrections)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProperEntry {
    pub d: usize,
    pub bounded: bool,
    pub c0: Option<f64>,
    pub fail_at: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct L1Report {
    pub base: Vec<ProperEntry>,
    pub derived: Vec<ProperEntry>,
    pub pass: bool,
}

fn sweep_lower_orders(
    problem: &Problem,
    grid: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<Vec<ProperEntry>, SolverError> {
    let mut out = Vec::new();
    for d in 0..problem.m {
        // descending coefficients of R_d as a polynomial in tau:
        // r_{d,0} tau^d + ... + r_{d,d}
        let r_desc: Vec<Expr> = (0..=d).map(|k| problem.lower[d][k].clone()).collect();
        if r_desc.iter().all(|e| e.is_zero_literal()) {
            out.push(ProperEntry {
                d,
                bounded: true,
                c0: Some(0.0),
                fail_at: None,
            });
            continue;
        }
        let entry = match check_proper(&r_desc, &problem.principal, d, grid, tol)? {
            ProperCheck::Bounded { c0 } => ProperEntry {
                d,
                bounded: true,
                c0: Some(c0),
                fail_at: None,
            },
            ProperCheck::Fails { t, x } => ProperEntry {
                d,
                bounded: false,
                c0: None,
                fail_at: Some((t, x)),
            },
        };
        out.push(entry);
    }
    Ok(out)
}

/// Decomposability sweep of every lower-order symbol of the base problem and
/// of its derived operator, against the matching monic derivative.
pub fn check_l1_hypotheses(
    problem: &Problem,
    grid: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<L1Report, SolverError> {
    let base = sweep_lower_orders(problem, grid, tol)?;
    let (d1, _) = derived_operator(problem);
    let derived = sweep_lower_orders(&d1, grid, tol)?;
    let pass = base.iter().chain(&derived).all(|e| e.bounded);
    Ok(L1Report {
        base,
        derived,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub c_emp: f64,
    /// L2 distance over the final cone between this solution and the one for
    /// the previous (larger) epsilon.
    pub distance_to_previous: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Whether the inter-solution distances are non-increasing.
    pub cauchy: bool,
}

/// Replaces the principal part by its `(m-1)`-fold strictification for each
/// `eps`, solves, and reports the distances between consecutive solutions.
pub fn nuij_sweep(
    problem: &Problem,
    grid: &Grid,
    epsilons: &[f64],
    tol: &Tolerances,
) -> Result<SweepReport, SolverError> {
    assert!(!epsilons.is_empty());
    assert!(
        epsilons.windows(2).all(|w| w[1] < w[0]) && epsilons.iter().all(|&e| e > 0.0),
        "epsilons must be positive decreasing"
    );
    let mut entries: Vec<SweepEntry> = Vec::new();
    let mut prev_final: Option<(DMatrix<f64>, EnergyTrace)> = None;
    for &eps in epsilons {
        let p_eps = Problem {
            principal: HPoly::new(problem.principal.nuij_regularized_coeffs(eps)),
            ..problem.clone()
        };
        let (trace, u_final) = solve(&p_eps, grid, tol)?;
        let c_emp = empirical_constant(&trace);
        let distance = prev_final.as_ref().map(|(u_prev, _)| {
            // L2 distance of the scalar solution (block 0) over the final cone
            let last = trace.rows.last().unwrap();
            let lo = ((last.cone_lo - grid.x_lo) / grid.dx).round() as usize;
            let hi = ((last.cone_hi - grid.x_lo) / grid.dx).round() as usize;
            let mut acc = 0.0;
            for i in lo..=hi {
                let w = trapezoid_weight(i, lo, hi) * grid.dx;
                let diff = u_final[(0, i)] - u_prev[(0, i)];
                acc += w * diff * diff;
            }
            acc.sqrt()
        });
        entries.push(SweepEntry {
            eps,
            c_emp,
            distance_to_previous: distance,
        });
        prev_final = Some((u_final, trace));
    }
    let dists: Vec<f64> = entries
        .iter()
        .filter_map(|e| e.distance_to_previous)
        .collect();
    let cauchy = dists.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    Ok(SweepReport { entries, cauchy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn hp(coeffs: &[&str]) -> HPoly {
        HPoly::new(coeffs.iter().map(|c| parse_expr(c).unwrap()).collect())
    }

    fn wave_problem() -> Problem {
        let mut p = Problem::homogeneous(hp(&["0", "-1"]), (-3.0, 3.0), 0.0, 2.0, 1.0);
        // rightward traveling bump: u(t,x) = g(x - t), g a modulated Gaussian
        p.initial[0] = parse_expr("exp(-4*(x+1)^2)").unwrap();
        p.initial[1] = parse_expr("8*(x+1)*exp(-4*(x+1)^2)").unwrap();
        p
    }

    #[test]
    fn initial_state_wave() {
        let mut p = wave_problem();
        p.initial[0] = parse_expr("sin(x)").unwrap();
        p.initial[1] = parse_expr("0").unwrap();
        let grid = Grid::new(p.domain, 0.1, 0.5, 1.0, p.t_end).unwrap();
        let u0 = initial_state(&p, &grid).unwrap();
        let i = 30; // x = 0
        assert!((u0[(0, i)] - (0.0f64).sin()).abs() < 1e-12);
        assert!((u0[(1, i)] - 1.0).abs() < 1e-12); // u_x = cos(0)
        assert!(u0[(2, i)].abs() < 1e-12); // u_t = 0
    }

    #[test]
    fn initial_state_m3_ordering() {
        let mut p = Problem::homogeneous(hp(&["0", "-1", "0"]), (-1.0, 1.0), 0.0, 0.5, 0.2);
        p.initial[0] = parse_expr("x^3").unwrap();
        p.initial[1] = parse_expr("x^2").unwrap();
        p.initial[2] = parse_expr("x").unwrap();
        let grid = Grid::new(p.domain, 0.5, 0.5, 1.0, p.t_end).unwrap();
        let u0 = initial_state(&p, &grid).unwrap();
        let i = 3; // x = 0.5
        let x: f64 = 0.5;
        // rows: u; u_x, u_t; u_xx, u_tx, u_tt
        let expect = [
            x * x * x,
            3.0 * x * x,
            x * x,
            6.0 * x,
            2.0 * x,
            x,
        ];
        for (c, e) in expect.iter().enumerate() {
            assert!((u0[(c, i)] - e).abs() < 1e-12, "component {c}");
        }
    }

    #[test]
    fn zero_problem_stays_zero() {
        let p = Problem::homogeneous(hp(&["0", "-1"]), (-1.0, 1.0), 0.0, 0.5, 0.4);
        let grid = Grid::new(p.domain, 0.01, 0.5, 1.0, p.t_end).unwrap();
        let (trace, u) = solve(&p, &grid, &tol()).unwrap();
        assert!(u.norm() == 0.0);
        assert!(trace.rows.iter().all(|r| r.energy == 0.0));
    }

    #[test]
    fn wave_energy_drift_small() {
        let p = wave_problem();
        let grid = Grid::new(p.domain, 0.005, 0.5, 1.0, p.t_end).unwrap();
        let (trace, _) = solve(&p, &grid, &tol()).unwrap();
        let e0 = trace.rows[0].energy;
        let ef = trace.rows.last().unwrap().energy;
        assert!(e0 > 0.0);
        // coarse grid: generous drift ceiling, refined in the acceptance run
        assert!((ef - e0).abs() < 0.12 * e0, "drift {}", (ef - e0) / e0);
        let v = verify_energy_estimate(&trace, None);
        assert!(v.c_emp >= 0.999 && v.c_emp < 1.1, "c_emp {}", v.c_emp);
    }

    #[test]
    fn finite_speed_of_propagation() {
        // data supported well inside the cone; solution must stay negligible
        // outside the widened forward cone
        let mut p = Problem::homogeneous(hp(&["0", "-1"]), (-2.0, 2.0), 0.0, 1.0, 0.5);
        p.initial[0] = parse_expr("exp(-400*x^2)").unwrap();
        p.initial[1] = parse_expr("0").unwrap();
        let grid = Grid::new(p.domain, 0.005, 0.5, 1.0, p.t_end).unwrap();
        let (_, u) = solve(&p, &grid, &tol()).unwrap();
        // initial support radius ~ 0.3 (where the tail is ~ 4e-16); the
        // scheme moves information one cell per step, so nothing can reach
        // past 0.3 + dx * steps
        let radius = 0.3 + grid.dx * (grid.n_steps + 2) as f64;
        for i in 0..grid.n_nodes {
            let x = grid.node(i);
            if x.abs() > radius {
                for c in 0..3 {
                    assert!(
                        u[(c, i)].abs() <= 1e-10,
                        "leak at x = {x}: {}",
                        u[(c, i)]
                    );
                }
            }
        }
    }

    #[test]
    fn transport_profiles_advect() {
        // factored speeds +-c with data split into a pure right-mover:
        // compare against the translated profile
        let c = 0.5;
        let mut p = Problem::homogeneous(hp(&["0", "-0.25"]), (-2.0, 2.0), 0.0, 1.5, 1.0);
        p.initial[0] = parse_expr("exp(-25*(x+0.5)^2)").unwrap();
        // u = g(x - c t) needs u_t = -c g'
        p.initial[1] = parse_expr("25*(x+0.5)*exp(-25*(x+0.5)^2)").unwrap();
        let grid = Grid::new(p.domain, 0.002, 0.5, c, p.t_end).unwrap();
        let (_, u) = solve(&p, &grid, &tol()).unwrap();
        let mut err = 0.0f64;
        let mut amp = 0.0f64;
        for i in 0..grid.n_nodes {
            let x = grid.node(i);
            if x.abs() <= 1.0 {
                let exact = (-25.0 * (x - c * p.t_end + 0.5) * (x - c * p.t_end + 0.5)).exp();
                err = err.max((u[(0, i)] - exact).abs());
                amp = amp.max(exact.abs());
            }
        }
        assert!(amp > 0.9);
        assert!(err < 0.05, "max error {err}");
    }

    #[test]
    fn cfl_and_cone_guards() {
        let p = Problem::homogeneous(hp(&["0", "-1"]), (-1.0, 1.0), 0.0, 0.5, 0.4);
        assert!(matches!(
            Grid::new(p.domain, 0.01, 1.5, 1.0, p.t_end),
            Err(SolverError::CflViolation { .. })
        ));
        let mut late = p.clone();
        late.t_end = 2.0; // exceeds rho0 / tau_max = 0.5
        let grid = Grid::new(late.domain, 0.01, 0.5, 1.0, late.t_end).unwrap();
        assert!(matches!(
            solve(&late, &grid, &tol()),
            Err(SolverError::ConeExhausted { .. })
        ));
    }

    #[test]
    fn derived_operator_examples() {
        // constant coefficients: L1 = L
        let p = Problem::homogeneous(hp(&["0", "-1"]), (-1.0, 1.0), 0.0, 0.5, 0.4);
        let (d1, corr) = derived_operator(&p);
        for (row_a, row_b) in d1.lower.iter().zip(&p.lower) {
            for (a, b) in row_a.iter().zip(row_b) {
                assert_eq!(a, b);
            }
        }
        assert!(corr.iter().all(|e| e.is_zero_literal()));

        // P = tau^2 - x^2: R_1^(1) = -P' has tau-coefficient 0 and
        // xi-coefficient 2x
        let p = Problem::homogeneous(hp(&["0", "-x^2"]), (-1.0, 1.0), 0.0, 0.5, 0.4);
        let (d1, _) = derived_operator(&p);
        assert!(d1.lower[1][0].is_zero_literal()); // tau coefficient
        let e = &d1.lower[1][1]; // xi coefficient: -d_x(-x^2) = 2x
        for x in [-1.0, 0.3, 2.0] {
            assert!((e.eval(0.0, x).unwrap() - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_operator_identity_on_polynomials() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        // L(1)(u_x) = d_x(L u) + sum_d (d_x r_{d,0}) d_t^d u, checked by
        // evaluating both sides on random bivariate polynomials u
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut p = Problem::homogeneous(hp(&["x", "-1 - x^2", "x^2"]), (-1.0, 1.0), 0.0, 0.5, 0.2);
        p.lower[0][0] = parse_expr("x^2").unwrap();
        p.lower[1][0] = parse_expr("x^3").unwrap();
        p.lower[1][1] = parse_expr("2*x").unwrap();
        p.lower[2][0] = parse_expr("x").unwrap();
        p.lower[2][1] = parse_expr("1 - x").unwrap();
        p.lower[2][2] = parse_expr("x^2").unwrap();
        let (d1, corr) = derived_operator(&p);

        for _ in 0..20 {
            // random polynomial u(t,x) of degree <= 4 in each variable
            let coeffs: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let eval_u = |dt: usize, dx: usize, t: f64, x: f64| -> f64 {
                let mut acc = 0.0;
                for (i, row) in coeffs.iter().enumerate() {
                    for (j, c) in row.iter().enumerate() {
                        if i >= dt && j >= dx {
                            let mut f = *c;
                            for q in 0..dt {
                                f *= (i - q) as f64;
                            }
                            for q in 0..dx {
                                f *= (j - q) as f64;
                            }
                            acc += f * t.powi((i - dt) as i32) * x.powi((j - dx) as i32);
                        }
                    }
                }
                acc
            };
            let apply = |prob: &Problem, dt_extra: usize, dx_extra: usize, t: f64, x: f64| -> f64 {
                // L u = P(d) u - sum_d R_d(d) u applied to d_t^a d_x^b u
                let m = prob.m;
                let mut acc = eval_u(m + dt_extra, dx_extra, t, x);
                for (k, a) in prob.principal.coeff_exprs().iter().enumerate() {
                    acc += a.eval_raw(t, x) * eval_u(m - 1 - k + dt_extra, k + 1 + dx_extra, t, x);
                }
                for d in 0..m {
                    for k in 0..=d {
                        acc -= prob.lower[d][k].eval_raw(t, x)
                            * eval_u(d - k + dt_extra, k + dx_extra, t, x);
                    }
                }
                acc
            };
            let (t, x) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            // d_x (L u): differentiate the whole expression numerically is
            // inexact; instead expand by product rule using symbolic coeffs
            let h = 1e-5;
            let dxlu = (apply(&p, 0, 0, t, x + h) - apply(&p, 0, 0, t, x - h)) / (2.0 * h);
            let l1ux = apply(&d1, 0, 1, t, x);
            let mut corr_sum = 0.0;
            for (d, c) in corr.iter().enumerate() {
                corr_sum += c.eval_raw(t, x) * eval_u(d, 0, t, x);
            }
            let lhs = l1ux;
            let rhs = dxlu + corr_sum;
            assert!(
                (lhs - rhs).abs() < 1e-5 * (1.0 + lhs.abs().max(rhs.abs())),
                "identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn l1_hypotheses_on_wave() {
        let p = wave_problem();
        let grid: Vec<(f64, f64)> = (-10..=10).map(|i| (0.0, i as f64 / 5.0)).collect();
        let rep = check_l1_hypotheses(&p, &grid, &tol()).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn nuij_sweep_on_double_root() {
        // P = tau^2 (double root): strictified solves complete, distances
        // between consecutive solutions shrink
        let mut p = Problem::homogeneous(hp(&["0", "0"]), (-1.0, 1.0), 0.0, 0.6, 0.4);
        p.initial[0] = parse_expr("exp(-50*x^2)").unwrap();
        p.initial[1] = parse_expr("0").unwrap();
        let grid = Grid::new(p.domain, 0.005, 0.5, 1.0, p.t_end).unwrap();
        let rep = nuij_sweep(&p, &grid, &[1e-1, 1e-2, 1e-3], &tol()).unwrap();
        assert_eq!(rep.entries.len(), 3);
        assert!(rep.entries[1].distance_to_previous.unwrap() > 0.0);
        assert!(rep.cauchy, "{rep:?}");
    }

    #[test]
    fn refinement_convergence() {
        let p = wave_problem();
        let mut drifts = Vec::new();
        for dx in [0.02, 0.01, 0.005] {
            let grid = Grid::new(p.domain, dx, 0.5, 1.0, p.t_end).unwrap();
            let (trace, _) = solve(&p, &grid, &tol()).unwrap();
            let e0 = trace.rows[0].energy;
            let ef = trace.rows.last().unwrap().energy;
            drifts.push((ef - e0).abs() / e0);
        }
        // first-order scheme: halving dx roughly halves the drift
        assert!(drifts[1] < drifts[0] * 0.75, "{drifts:?}");
        assert!(drifts[2] < drifts[1] * 0.75, "{drifts:?}");
    }

    #[test]
    fn csv_schema() {
        let p = Problem::homogeneous(hp(&["0", "-1"]), (-1.0, 1.0), 0.0, 0.5, 0.1);
        let grid = Grid::new(p.domain, 0.1, 0.5, 1.0, p.t_end).unwrap();
        let (trace, _) = solve(&p, &grid, &tol()).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,energy,forcing_norm,dt0,dt1,cone_lo,cone_hi");
        assert_eq!(csv.lines().count(), trace.rows.len() + 1);
    }
}
