//! Jannelli symmetrizers for Sylvester matrices, the block matrices of the
//! first-order reduction, and empirical verification of the bound properties
//! the energy argument rests on.
//!
//! Coefficient-vector convention: a degree-`d` polynomial is vectorized in
//! ascending powers, `(c_0, ..., c_{d-1}, 1)`.  With the companion form used
//! here (superdiagonal ones, last row of negated coefficients) this makes the
//! reduced-polynomial rows genuine left eigenvectors: `w_k A = tau_k w_k`.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{Expr, Var};
use crate::hyperpoly::{
    companion_matrix, poly_from_roots, reduced_polys, HPoly, HyperError, PointPoly, Tolerances,
};
use crate::problem::Problem;

/// Companion matrix of a monic polynomial (descending coefficients):
/// superdiagonal ones, last row `-a_d .. -a_1`.
pub fn sylvester_matrix(coeffs: &[f64]) -> DMatrix<f64> {
    companion_matrix(coeffs)
}

/// Rows are the ascending coefficient vectors of the reduced polynomials;
/// row `k` is a left eigenvector of the companion matrix for `tau_k`.
pub fn eigen_rows(p: &PointPoly) -> DMatrix<f64> {
    let m = p.degree();
    let red = reduced_polys(p);
    DMatrix::from_fn(m, m, |k, i| red[k][m - 1 - i])
}

/// Diagonal of the comparison matrix: entry `j` is the elementary symmetric
/// polynomial of degree `m-1-j` in the squared roots (so the last entry is 1).
pub fn psi_diag(roots: &[f64]) -> DVector<f64> {
    let m = roots.len();
    let neg_squares: Vec<f64> = roots.iter().map(|r| -r * r).collect();
    // descending coeffs of prod (y + tau_j^2): entry k is e_k
    let e = poly_from_roots(&neg_squares);
    DVector::from_fn(m, |j, _| e[m - 1 - j])
}

/// The symmetrizer `Q = W^T W` together with its diagonal comparison matrix.
pub fn jannelli_q(p: &PointPoly) -> (DMatrix<f64>, DVector<f64>) {
    let w = eigen_rows(p);
    (w.transpose() * &w, psi_diag(&p.roots))
}

/// One block of the first-order reduction, frozen at a point.
#[derive(Debug, Clone)]
pub struct SylvesterBlock {
    pub d: usize,
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub lambda: DVector<f64>,
}

pub fn sylvester_block(p: &PointPoly) -> SylvesterBlock {
    let w = eigen_rows(p);
    let q = w.transpose() * &w;
    SylvesterBlock {
        d: p.degree(),
        a: sylvester_matrix(&p.coeffs),
        q,
        w,
        psi: psi_diag(&p.roots),
        lambda: DVector::from_column_slice(&p.roots),
    }
}

/// Descending coefficient expressions of the monic tau-derivative of
/// degree `d` of the principal part (exact rational scaling).
pub fn monic_derivative_exprs(p: &HPoly, d: usize) -> Vec<Expr> {
    let m = p.degree();
    assert!(d >= 1 && d <= m);
    let mut out = Vec::with_capacity(d + 1);
    out.push(Expr::one());
    for k in 1..=d {
        let mut f = 1.0;
        for j in d - k + 1..=m - k {
            f *= j as f64;
        }
        let mut g = 1.0;
        for j in d + 1..=m {
            g *= j as f64;
        }
        out.push(Expr::mul(
            Expr::constant(f / g),
            p.coeff_exprs()[k - 1].clone(),
        ));
    }
    out
}

/// Companion matrix with expression entries.
fn companion_exprs(coeffs_desc: &[Expr]) -> Vec<Vec<Expr>> {
    let d = coeffs_desc.len() - 1;
    let mut a = vec![vec![Expr::zero(); d]; d];
    for i in 0..d.saturating_sub(1) {
        a[i][i + 1] = Expr::one();
    }
    for j in 0..d {
        a[d - 1][j] = Expr::neg(coeffs_desc[d - j].clone());
    }
    a
}

/// Symbolic symmetrizer entries via the Bezout resultant form: `Q(tau,sigma)
/// = [P(tau) P'(sigma) - P(sigma) P'(tau)] / (tau - sigma)`, whose
/// coefficient matrix in ascending powers equals `W^T W`.
pub fn bezout_q_exprs(coeffs_desc: &[Expr]) -> Vec<Vec<Expr>> {
    let d = coeffs_desc.len() - 1;
    // ascending coefficients of P and P'
    let p: Vec<Expr> = (0..=d).map(|i| coeffs_desc[d - i].clone()).collect();
    let q: Vec<Expr> = (0..d)
        .map(|j| Expr::mul(Expr::constant((j + 1) as f64), p[j + 1].clone()))
        .collect();
    // numerator N[i][j] = p_i q_j - p_j q_i  (q_d = 0)
    let qq = |i: usize| -> Expr {
        if i < d {
            q[i].clone()
        } else {
            Expr::zero()
        }
    };
    let mut n = vec![vec![Expr::zero(); d + 1]; d + 1];
    for i in 0..=d {
        for j in 0..=d {
            n[i][j] = Expr::sub(
                Expr::mul(p[i].clone(), qq(j)),
                Expr::mul(p[j].clone(), qq(i)),
            );
        }
    }
    // synthetic division by (tau - sigma) along the tau direction;
    // sigma-degrees above d-1 cancel identically and are dropped
    let mut b = vec![vec![Expr::zero(); d + 1]; d];
    b[d - 1] = n[d].clone();
    for i in (1..d).rev() {
        for j in 0..=d {
            let shifted = if j == 0 {
                Expr::zero()
            } else {
                b[i][j - 1].clone()
            };
            b[i - 1][j] = Expr::add(n[i][j].clone(), shifted);
        }
    }
    b.into_iter()
        .map(|row| row.into_iter().take(d).collect())
        .collect()
}

fn mat_mul_exprs(a: &[Vec<Expr>], b: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let n = a.len();
    let mut out = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Expr::zero();
            for k in 0..n {
                acc = Expr::add(acc, Expr::mul(a[i][k].clone(), b[k][j].clone()));
            }
            out[i][j] = acc;
        }
    }
    out
}

fn mat_diff_x(a: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    a.iter()
        .map(|row| row.iter().map(|e| e.diff(Var::X)).collect())
        .collect()
}

fn eval_expr_mat(a: &[Vec<Expr>], t: f64, x: f64) -> Result<DMatrix<f64>, HyperError> {
    let n = a.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = a[i][j].eval(t, x).map_err(HyperError::from)?;
        }
    }
    Ok(out)
}

/// The first-order reduction `U_t = A U_x + B U + F` of dimension
/// `N = m(m+1)/2`, with evaluators for the block matrices and the symbolic
/// x-derivatives needed by the energy argument.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub m: usize,
    pub n: usize,
    /// Sup over the sampled domain of the largest root magnitude.
    pub tau_max: f64,
    lower: Vec<Vec<Expr>>,
    forcing: Expr,
    tol: Tolerances,
    /// Per block `d` (size `d+1`): descending coefficient expressions of the
    /// degree-`d+1` monic derivative, its companion matrix, and the symbolic
    /// derivatives `(Q A)_x` and `A_x`.
    md_coeffs: Vec<Vec<Expr>>,
    a_exprs: Vec<Vec<Vec<Expr>>>,
    a_x_exprs: Vec<Vec<Vec<Expr>>>,
    qa_x_exprs: Vec<Vec<Vec<Expr>>>,
}

pub fn assemble_block_system(
    problem: &Problem,
    xgrid: &[f64],
    tol: &Tolerances,
) -> Result<BlockSystem, HyperError> {
    let m = problem.m;
    let mut tau_max = 0.0f64;
    for &x in xgrid {
        let pt = problem.principal.roots_at(x, tol)?;
        for r in &pt.roots {
            tau_max = tau_max.max(r.abs());
        }
    }
    let mut md_coeffs = Vec::with_capacity(m);
    let mut a_exprs = Vec::with_capacity(m);
    let mut a_x_exprs = Vec::with_capacity(m);
    let mut qa_x_exprs = Vec::with_capacity(m);
    for d in 0..m {
        let coeffs = monic_derivative_exprs(&problem.principal, d + 1);
        let a = companion_exprs(&coeffs);
        let q = bezout_q_exprs(&coeffs);
        let qa = mat_mul_exprs(&q, &a);
        a_x_exprs.push(mat_diff_x(&a));
        qa_x_exprs.push(mat_diff_x(&qa));
        a_exprs.push(a);
        md_coeffs.push(coeffs);
    }
    Ok(BlockSystem {
        m,
        n: m * (m + 1) / 2,
        tau_max,
        lower: problem.lower.clone(),
        forcing: problem.forcing.clone(),
        tol: tol.clone(),
        md_coeffs,
        a_exprs,
        a_x_exprs,
        qa_x_exprs,
    })
}

impl BlockSystem {
    /// Index range of block `d` (size `d+1`) inside the stacked vector.
    pub fn block_range(&self, d: usize) -> std::ops::Range<usize> {
        let start = d * (d + 1) / 2;
        start..start + d + 1
    }

    fn place_block(&self, out: &mut DMatrix<f64>, d: usize, block: &DMatrix<f64>) {
        let r = self.block_range(d);
        out.view_mut((r.start, r.start), (block.nrows(), block.ncols()))
            .copy_from(block);
    }

    pub fn eval_a(&self, x: f64) -> Result<DMatrix<f64>, HyperError> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for d in 0..self.m {
            let b = eval_expr_mat(&self.a_exprs[d], 0.0, x)?;
            self.place_block(&mut out, d, &b);
        }
        Ok(out)
    }

    pub fn eval_a_x(&self, x: f64) -> Result<DMatrix<f64>, HyperError> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for d in 0..self.m {
            let b = eval_expr_mat(&self.a_x_exprs[d], 0.0, x)?;
            self.place_block(&mut out, d, &b);
        }
        Ok(out)
    }

    pub fn eval_qa_x(&self, x: f64) -> Result<DMatrix<f64>, HyperError> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for d in 0..self.m {
            let b = eval_expr_mat(&self.qa_x_exprs[d], 0.0, x)?;
            self.place_block(&mut out, d, &b);
        }
        Ok(out)
    }

    pub fn eval_q(&self, x: f64) -> Result<DMatrix<f64>, HyperError> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for d in 0..self.m {
            let pt = self.point_derivative(d, x)?;
            let (q, _) = jannelli_q(&pt);
            self.place_block(&mut out, d, &q);
        }
        Ok(out)
    }

    pub fn eval_xi(&self, x: f64) -> Result<DMatrix<f64>, HyperError> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for d in 0..self.m {
            let pt = self.point_derivative(d, x)?;
            let psi = psi_diag(&pt.roots);
            let r = self.block_range(d);
            for (j, i) in r.enumerate() {
                out[(i, i)] = psi[j];
            }
        }
        Ok(out)
    }

    /// The degree-`d+1` monic derivative at `x`, with roots.
    pub fn point_derivative(&self, d: usize, x: f64) -> Result<PointPoly, HyperError> {
        let coeffs: Vec<f64> = self.md_coeffs[d]
            .iter()
            .map(|e| e.eval(0.0, x))
            .collect::<Result<_, _>>()
            .map_err(HyperError::from)?;
        PointPoly::from_coeffs(&coeffs, x, &self.tol)
    }

    pub fn eval_b(&self, t: f64, x: f64) -> Result<DMatrix<f64>, HyperError> {
        let mut out = DMatrix::zeros(self.n, self.n);
        // coupling blocks: last row of block d carries the coefficients of
        // the degree-(d+1) monic derivative, ascending over block d+1
        for d in 0..self.m - 1 {
            let row = self.block_range(d).end - 1;
            let cols = self.block_range(d + 1);
            let coeffs = &self.md_coeffs[d]; // degree d+1, length d+2
            for (j, col) in cols.enumerate() {
                out[(row, col)] = coeffs[d + 1 - j].eval(0.0, x).map_err(HyperError::from)?;
            }
        }
        // lower-order rows: the last scalar equation collects every r_{d,k}
        let row = self.n - 1;
        for d in 0..self.m {
            let cols = self.block_range(d);
            for (j, col) in cols.enumerate() {
                // component j of block d is d_t^j d_x^{d-j} u -> r_{d, d-j}
                out[(row, col)] = self.lower[d][d - j].eval(t, x).map_err(HyperError::from)?;
            }
        }
        Ok(out)
    }

    pub fn eval_f(&self, t: f64, x: f64) -> Result<DVector<f64>, HyperError> {
        let mut out = DVector::zeros(self.n);
        out[self.n - 1] = self.forcing.eval(t, x).map_err(HyperError::from)?;
        Ok(out)
    }
}

/// Ceilings / floors the empirical constants are checked against.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCeilings {
    pub gamma0: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma1_floor: f64,
    /// Relative slack on the `tau_max` comparison.
    pub qa_slack: f64,
}

impl Default for BoundCeilings {
    fn default() -> Self {
        BoundCeilings {
            gamma0: 1e6,
            gamma2: 1e8,
            gamma3: 1e8,
            gamma1_floor: 1e-12,
            qa_slack: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundEntry {
    pub name: String,
    pub empirical: f64,
    /// Ceiling for sup-type entries, floor for the two inf-type entries
    /// (`Q_vs_Xi_lower`, `weak_coercivity`).
    pub ceiling: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub tau_max: f64,
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Empirically estimates the constants in the bound inequalities by sampling
/// random unit vectors at each grid point. Quotients with denominators at
/// the noise floor are skipped.
pub fn verify_bounds(
    bs: &BlockSystem,
    grid: &[(f64, f64)],
    n_random_v: usize,
    seed: u64,
    ceilings: &BoundCeilings,
) -> Result<BoundReport, HyperError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bs.n;
    let mut sup_q = 0.0f64; // |(Qv,v)| / |v|^2
    let mut sup_qa = 0.0f64; // |(QAv,v)| / (Qv,v)
    let mut sup_qax = 0.0f64; // |((QA)_x v,v)| / (Xi v,v)
    let mut sup_ax = 0.0f64; // |A_x v|^2 / (Xi v,v)
    let mut sup_qxi = 0.0f64; // (Qv,v) / (Xi v,v)
    let mut inf_qxi = f64::INFINITY;
    let mut sup_qb = 0.0f64; // |(QBv,v)| / (Qv,v)
    let mut inf_coerc = f64::INFINITY; // (Qv,v) / sum of block-last squares

    for &(t, x) in grid {
        let q = bs.eval_q(x)?;
        let xi = bs.eval_xi(x)?;
        let a = bs.eval_a(x)?;
        let b = bs.eval_b(t, x)?;
        let qa = &q * &a;
        let qax = bs.eval_qa_x(x)?;
        let ax = bs.eval_a_x(x)?;
        let qb = &q * &b;
        let scale_q = q.norm();
        let scale_xi = xi.norm();

        for _ in 0..n_random_v {
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64));
            let norm = v.norm();
            if norm < 1e-12 {
                continue;
            }
            v /= norm;
            let qvv = (&q * &v).dot(&v);
            let xivv = (&xi * &v).dot(&v);
            sup_q = sup_q.max(qvv.abs());
            let q_ok = qvv > 1e-12 * (1.0 + scale_q);
            let xi_ok = xivv > 1e-12 * (1.0 + scale_xi);
            if q_ok {
                sup_qa = sup_qa.max((&qa * &v).dot(&v).abs() / qvv);
                sup_qb = sup_qb.max((&qb * &v).dot(&v).abs() / qvv);
            }
            if xi_ok {
                sup_qax = sup_qax.max((&qax * &v).dot(&v).abs() / xivv);
                let axv = &ax * &v;
                sup_ax = sup_ax.max(axv.dot(&axv) / xivv);
                sup_qxi = sup_qxi.max(qvv / xivv);
                inf_qxi = inf_qxi.min(qvv / xivv);
            }
            let vm: f64 = (0..bs.m)
                .map(|d| {
                    let i = bs.block_range(d).end - 1;
                    v[i] * v[i]
                })
                .sum();
            if vm > 1e-12 {
                inf_coerc = inf_coerc.min(qvv / vm);
            }
        }
    }

    let qa_ceiling = bs.tau_max * (1.0 + ceilings.qa_slack) + 1e-9;
    let entries = vec![
        BoundEntry {
            name: "Q_bounded".into(),
            empirical: sup_q,
            ceiling: ceilings.gamma0,
            pass: sup_q <= ceilings.gamma0,
        },
        BoundEntry {
            name: "QA_vs_Q".into(),
            empirical: sup_qa,
            ceiling: qa_ceiling,
            pass: sup_qa <= qa_ceiling,
        },
        BoundEntry {
            name: "QA_x_vs_Xi".into(),
            empirical: sup_qax,
            ceiling: ceilings.gamma0,
            pass: sup_qax <= ceilings.gamma0,
        },
        BoundEntry {
            name: "A_x_vs_Xi".into(),
            empirical: sup_ax,
            ceiling: ceilings.gamma0,
            pass: sup_ax <= ceilings.gamma0,
        },
        BoundEntry {
            name: "Q_vs_Xi_upper".into(),
            empirical: sup_qxi,
            ceiling: ceilings.gamma2,
            pass: sup_qxi <= ceilings.gamma2,
        },
        BoundEntry {
            name: "Q_vs_Xi_lower".into(),
            empirical: inf_qxi,
            ceiling: ceilings.gamma1_floor,
            pass: inf_qxi >= ceilings.gamma1_floor,
        },
        BoundEntry {
            name: "QB_vs_Q".into(),
            empirical: sup_qb,
            ceiling: ceilings.gamma3,
            pass: sup_qb <= ceilings.gamma3,
        },
        BoundEntry {
            name: "weak_coercivity".into(),
            empirical: inf_coerc,
            ceiling: ceilings.gamma1_floor,
            pass: inf_coerc >= ceilings.gamma1_floor,
        },
    ];
    Ok(BoundReport {
        tau_max: bs.tau_max,
        entries,
    })
}
