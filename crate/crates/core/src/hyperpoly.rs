//! Pointwise machinery for hyperbolic polynomials: root extraction via
//! balanced companion matrices, reduced polynomials, monic derivatives, the
//! Nuij map and the interlacing / root-separation estimates.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{Expr, ExprError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperError {
    #[error("polynomial is not hyperbolic at x = {x}: |Im root| = {imag:.3e}")]
    NotHyperbolic { x: f64, imag: f64 },
    #[error("Nuij regularization broke down: residual root gap {gap:.3e}")]
    StrictnessFailure { gap: f64 },
    #[error(transparent)]
    Eval(#[from] ExprError),
}

/// Scale-aware tolerances used by the root machinery.
///
/// `imag_factor` and `cluster_factor` multiply `(1 + scale)` where the scale
/// is the largest coefficient magnitude resp. the root spread.
#[derive(Debug, Clone)]
pub struct Tolerances {
    pub imag_factor: f64,
    pub cluster_factor: f64,
    pub unbounded_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            imag_factor: 1e-8,
            cluster_factor: 1e-7,
            unbounded_threshold: 1e8,
        }
    }
}

/// Monic degree-`m` polynomial in `tau` whose coefficients are functions
/// of `x`. The coefficient of `tau^m` is the constant 1 and is implicit.
#[derive(Debug, Clone)]
pub struct HPoly {
    m: usize,
    /// a_1 .. a_m, so that P = tau^m + a_1(x) tau^{m-1} + ... + a_m(x).
    coeffs: Vec<Expr>,
}

impl HPoly {
    pub fn new(coeffs: Vec<Expr>) -> HPoly {
        let m = coeffs.len();
        assert!(m >= 2, "degree must be at least 2");
        HPoly { m, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn coeff_exprs(&self) -> &[Expr] {
        &self.coeffs
    }

    /// Monic coefficient vector `[1, a_1(x), ..., a_m(x)]` at a point.
    pub fn coeffs_at(&self, x: f64) -> Result<Vec<f64>, ExprError> {
        let mut c = Vec::with_capacity(self.m + 1);
        c.push(1.0);
        for a in &self.coeffs {
            c.push(a.eval(0.0, x)?);
        }
        Ok(c)
    }

    /// Pointwise roots via balanced companion-matrix eigenvalues.
    pub fn roots_at(&self, x: f64, tol: &Tolerances) -> Result<PointPoly, HyperError> {
        let coeffs = self.coeffs_at(x)?;
        PointPoly::from_coeffs(&coeffs, x, tol)
    }

    /// Monic derivative of order `m - d`, scaled so the result is monic of
    /// degree `d`, with roots extracted at `x`.
    pub fn monic_tau_derivative(
        &self,
        d: usize,
        x: f64,
        tol: &Tolerances,
    ) -> Result<MonicDerivative, HyperError> {
        let coeffs = self.coeffs_at(x)?;
        let scaled = monic_derivative_coeffs(&coeffs, d);
        let point = PointPoly::from_coeffs(&scaled, x, tol)?;
        Ok(MonicDerivative { d, point })
    }

    /// Principal coefficients of the Nuij image `P - eps * dP/dtau` as fresh
    /// expressions (coefficient arithmetic, constant-folded).
    pub fn nuij_coeffs(&self, eps: f64) -> Vec<Expr> {
        nuij_step_exprs(&self.coeffs, self.m, eps)
    }

    /// `(m-1)`-fold application of the Nuij map on the coefficient exprs.
    pub fn nuij_regularized_coeffs(&self, eps: f64) -> Vec<Expr> {
        let mut c = self.coeffs.clone();
        for _ in 0..self.m - 1 {
            c = nuij_step_exprs(&c, self.m, eps);
        }
        c
    }
}

fn nuij_step_exprs(coeffs: &[Expr], m: usize, eps: f64) -> Vec<Expr> {
    // coefficient of tau^{m-j} in P - eps dP/dtau is a_j - eps (m-j+1) a_{j-1}
    let mut out = Vec::with_capacity(m);
    for j in 1..=m {
        let prev = if j == 1 {
            Expr::one()
        } else {
            coeffs[j - 2].clone()
        };
        out.push(Expr::sub(
            coeffs[j - 1].clone(),
            Expr::mul(Expr::constant(eps * (m - j + 1) as f64), prev),
        ));
    }
    out
}

/// A polynomial frozen at one evaluation point: monic coefficient vector in
/// descending powers, sorted real roots, and the multiplicity clusters.
#[derive(Debug, Clone)]
pub struct PointPoly {
    /// Monic, descending powers of tau; length is degree + 1.
    pub coeffs: Vec<f64>,
    /// Ascending roots.
    pub roots: Vec<f64>,
    /// Maximal runs of roots closer than the clustering tolerance,
    /// as index ranges into `roots`.
    pub clusters: Vec<std::ops::Range<usize>>,
    /// Evaluation point the polynomial came from (diagnostics only).
    pub x: f64,
}

impl PointPoly {
    pub fn degree(&self) -> usize {
        self.roots.len()
    }

    /// Roots of a monic real polynomial; fails if any root has an imaginary
    /// part above the scale-aware tolerance.
    pub fn from_coeffs(coeffs: &[f64], x: f64, tol: &Tolerances) -> Result<PointPoly, HyperError> {
        let m = coeffs.len() - 1;
        assert!(m >= 1);
        assert!((coeffs[0] - 1.0).abs() < 1e-12, "polynomial must be monic");
        let max_coeff = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let tol_imag = tol.imag_factor * (1.0 + max_coeff);

        let mut roots = Vec::with_capacity(m);
        if m == 1 {
            roots.push(-coeffs[1]);
        } else {
            let mut a = companion_matrix(coeffs);
            balance_in_place(&mut a);
            let eig = a.complex_eigenvalues();
            for z in eig.iter() {
                if z.im.abs() > tol_imag {
                    return Err(HyperError::NotHyperbolic { x, imag: z.im.abs() });
                }
                roots.push(z.re);
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(PointPoly::from_parts(coeffs.to_vec(), roots, x, tol))
    }

    /// Build from known real roots (coefficients by synthetic multiplication).
    pub fn from_roots(roots: &[f64], x: f64, tol: &Tolerances) -> PointPoly {
        let mut sorted = roots.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let coeffs = poly_from_roots(&sorted);
        PointPoly::from_parts(coeffs, sorted, x, tol)
    }

    fn from_parts(coeffs: Vec<f64>, roots: Vec<f64>, x: f64, tol: &Tolerances) -> PointPoly {
        let clusters = cluster_roots(&roots, tol);
        PointPoly {
            coeffs,
            roots,
            clusters,
            x,
        }
    }

    /// Index of the cluster containing root `k`.
    pub fn cluster_of(&self, k: usize) -> usize {
        self.clusters
            .iter()
            .position(|r| r.contains(&k))
            .expect("root index out of range")
    }

    pub fn has_multiple_roots(&self) -> bool {
        self.clusters.len() != self.roots.len()
    }

    /// `P - eps * dP/dtau` with fresh roots; hyperbolic by Nuij's lemma.
    pub fn nuij_map(&self, eps: f64, tol: &Tolerances) -> Result<PointPoly, HyperError> {
        let dp = poly_derivative(&self.coeffs);
        let mut c = self.coeffs.clone();
        for (i, d) in dp.iter().enumerate() {
            c[i + 1] -= eps * d;
        }
        PointPoly::from_coeffs(&c, self.x, tol)
    }

    /// `(m-1)`-fold Nuij map; the result is strictly hyperbolic with all
    /// root gaps proportional to `eps`.
    pub fn nuij_regularize(&self, eps: f64, tol: &Tolerances) -> Result<PointPoly, HyperError> {
        // iterate on coefficients only: intermediate polynomials can still
        // carry multiple roots, which root extraction resolves poorly
        let mut c = self.coeffs.clone();
        for _ in 0..self.degree().saturating_sub(1) {
            let dp = poly_derivative(&c);
            for (i, d) in dp.iter().enumerate() {
                c[i + 1] -= eps * d;
            }
        }
        let p = PointPoly::from_coeffs(&c, self.x, tol)?;
        let min_gap = p
            .roots
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if p.degree() >= 2 && min_gap < 1e-14 {
            return Err(HyperError::StrictnessFailure { gap: min_gap });
        }
        Ok(p)
    }
}

fn cluster_roots(roots: &[f64], tol: &Tolerances) -> Vec<std::ops::Range<usize>> {
    let m = roots.len();
    if m == 0 {
        return vec![];
    }
    let spread = roots[m - 1] - roots[0];
    let tol_cluster = tol.cluster_factor * (1.0 + spread);
    let mut clusters = Vec::new();
    let mut start = 0;
    for k in 1..m {
        if roots[k] - roots[k - 1] > tol_cluster {
            clusters.push(start..k);
            start = k;
        }
    }
    clusters.push(start..m);
    clusters
}

/// Cluster tolerance used by `cluster_roots` for the given spread.
pub fn cluster_tolerance(roots: &[f64], tol: &Tolerances) -> f64 {
    let spread = if roots.is_empty() {
        0.0
    } else {
        roots[roots.len() - 1] - roots[0]
    };
    tol.cluster_factor * (1.0 + spread)
}

/// Sylvester/companion matrix of a monic polynomial in descending coeffs:
/// superdiagonal ones, last row `-a_d .. -a_1`.
pub fn companion_matrix(coeffs: &[f64]) -> DMatrix<f64> {
    let d = coeffs.len() - 1;
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..d {
        // a_{d-j} sits at column j of the last row
        a[(d - 1, j)] = -coeffs[d - j];
    }
    a
}

/// Parlett-Reinsch balancing (radix 2), in place.
fn balance_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix: f64 = 2.0;
    let sq = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let s = c + r;
            let mut c2 = c;
            while c2 < r / radix {
                c2 *= sq;
                f *= radix;
            }
            while c2 >= r * radix {
                c2 /= sq;
                f /= radix;
            }
            if (c2 + r / f) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Evaluate a polynomial in descending coefficients.
pub fn poly_eval(coeffs: &[f64], tau: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * tau + c)
}

/// Derivative, descending coefficients (degree drops by one).
pub fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    let d = coeffs.len() - 1;
    (0..d).map(|i| coeffs[i] * (d - i) as f64).collect()
}

/// Monic polynomial with the given roots, descending coefficients.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        c.push(0.0);
        for i in (1..c.len()).rev() {
            c[i] = c[i] - r * c[i - 1];
        }
    }
    c
}

/// Coefficients of the monic tau-derivative of order `m - d`:
/// `(d!/m!) * d^{m-d}/dtau^{m-d} P`, descending, length `d + 1`.
pub fn monic_derivative_coeffs(coeffs: &[f64], d: usize) -> Vec<f64> {
    let m = coeffs.len() - 1;
    assert!(d >= 1 && d <= m);
    let mut out = Vec::with_capacity(d + 1);
    for k in 0..=d {
        // a_{d,k} = a_k * (d!/m!) * (m-k)!/(d-k)!
        let mut f = 1.0;
        for j in d - k + 1..=m - k {
            f *= j as f64;
        }
        let mut g = 1.0;
        for j in d + 1..=m {
            g *= j as f64;
        }
        out.push(coeffs[k] * f / g);
    }
    out
}

/// The degree-`m-1` reduced polynomials, each omitting one root.
/// Output `k` is monic descending of length `m`.
pub fn reduced_polys(p: &PointPoly) -> Vec<Vec<f64>> {
    let m = p.degree();
    (0..m)
        .map(|k| {
            let rest: Vec<f64> = p
                .roots
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, r)| *r)
                .collect();
            poly_from_roots(&rest)
        })
        .collect()
}

/// The degree-`m-2` bi-reduced polynomials omitting the root pair `(h, k)`,
/// `h < k`, in lexicographic pair order.
pub fn bireduced_polys(p: &PointPoly) -> Vec<((usize, usize), Vec<f64>)> {
    let m = p.degree();
    assert!(m >= 2);
    let mut out = Vec::new();
    for h in 0..m {
        for k in h + 1..m {
            let rest: Vec<f64> = p
                .roots
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != h && *j != k)
                .map(|(_, r)| *r)
                .collect();
            out.push(((h, k), poly_from_roots(&rest)));
        }
    }
    out
}

/// Monic derivative of order `m - d` together with its roots.
#[derive(Debug, Clone)]
pub struct MonicDerivative {
    pub d: usize,
    pub point: PointPoly,
}

/// Peyser's refinement of Rolle interlacing for the derivative roots:
/// the `j`-th derivative root lies in `[lo, hi]` (1-based `j`).
pub fn peyser_bounds(taus: &[f64], j: usize) -> (f64, f64) {
    let m = taus.len();
    assert!(j >= 1 && j < m);
    let gap = taus[j] - taus[j - 1];
    let lo = taus[j - 1] + gap / (m - j + 1) as f64;
    let hi = taus[j] - gap / (j + 1) as f64;
    (lo, hi)
}

/// Checks `tau_j <= lam_j <= tau_{j+1} - eta (tau_{j+1} - tau_j)` for all j,
/// with a slack of `1e-12 * (1 + spread)`.
pub fn check_interlacing(taus: &[f64], lams: &[f64], eta: f64) -> bool {
    let m = taus.len();
    assert_eq!(lams.len() + 1, m);
    let spread = taus[m - 1] - taus[0];
    let slack = 1e-12 * (1.0 + spread.abs());
    (0..m - 1).all(|j| {
        let gap = taus[j + 1] - taus[j];
        lams[j] >= taus[j] - slack && lams[j] <= taus[j + 1] - eta * gap + slack
    })
}

/// Result of the root-separation (Hypothesis B style) constant estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum CoConstant {
    Bounded { m_const: f64 },
    Unbounded { x: f64 },
}

/// Empirical sup over the grid of `(tau_j^2 + tau_k^2) / (tau_j - tau_k)^2`
/// for root pairs outside a common cluster. A pair inside a cluster that is
/// not itself near zero means the ratio blows up; likewise a running sup
/// above the threshold.
pub fn estimate_co_constant(
    p: &HPoly,
    xgrid: &[f64],
    tol: &Tolerances,
) -> Result<CoConstant, HyperError> {
    assert!(!xgrid.is_empty());
    let mut sup = 0.0f64;
    for &x in xgrid {
        let pt = p.roots_at(x, tol)?;
        let tc = cluster_tolerance(&pt.roots, tol);
        let m = pt.degree();
        for j in 0..m {
            for k in j + 1..m {
                let (tj, tk) = (pt.roots[j], pt.roots[k]);
                if pt.cluster_of(j) == pt.cluster_of(k) {
                    if tj * tj > tc * tc || tk * tk > tc * tc {
                        return Ok(CoConstant::Unbounded { x });
                    }
                } else {
                    let ratio = (tj * tj + tk * tk) / ((tj - tk) * (tj - tk));
                    sup = sup.max(ratio);
                    if sup > tol.unbounded_threshold {
                        return Ok(CoConstant::Unbounded { x });
                    }
                }
            }
        }
    }
    Ok(CoConstant::Bounded { m_const: sup })
}

/// `4M/eta^2 + 2`: the separation constant inherited by the derivative roots.
pub fn derived_co_constant(m_const: f64, eta: f64) -> f64 {
    assert!(m_const >= 0.0 && eta > 0.0 && eta <= 1.0);
    4.0 * m_const / (eta * eta) + 2.0
}

/// Empirical Wakabayashi constants between a polynomial and a strictified
/// approximant: (max root displacement / eps, min pairwise gap / eps).
pub fn wakabayashi_constants(p: &PointPoly, p_eps: &PointPoly, eps: f64) -> (f64, f64) {
    let shift = p
        .roots
        .iter()
        .zip(&p_eps.roots)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let gap = p_eps
        .roots
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    (shift / eps, gap / eps)
}
