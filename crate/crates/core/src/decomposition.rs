//! Decompositions of lower-order symbols over the reduced-polynomial basis:
//! Lagrange and minimum-norm variants, grid sweeps for the boundedness
//! hypothesis, the Fisk split, and transfer to strictified approximants.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::Expr;
use crate::hyperpoly::{
    bireduced_polys, check_interlacing, poly_eval, reduced_polys, HPoly, HyperError, PointPoly,
    Tolerances,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error("polynomial has a multiple root (cluster of size {size})")]
    MultipleRoots { size: usize },
    #[error("symbol is not in the span of the reduced basis: residual {residual:.3e}")]
    Infeasible { residual: f64 },
    #[error("symbol degree {deg} exceeds the basis degree {max}")]
    DegreeTooHigh { deg: usize, max: usize },
    #[error("split polynomial failed the interlacing check")]
    InterlacingFailure,
    #[error(transparent)]
    Hyper(#[from] HyperError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompOrder {
    First,
    Second,
}

/// A pointwise decomposition over the (bi-)reduced basis.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// One coefficient per basis element; for second order the basis is
    /// indexed by `pairs` in the same order.
    pub coeffs: Vec<f64>,
    /// Pair indices `(h, k)`, `h < k`, for second-order decompositions.
    pub pairs: Vec<(usize, usize)>,
    /// Sup of coefficient magnitudes.
    pub bound: f64,
    pub order: DecompOrder,
}

/// Ascending coefficient vector (constant term first) of a descending
/// coefficient slice, padded with zeros to length `len`.
pub fn vec_asc(desc: &[f64], len: usize) -> Vec<f64> {
    assert!(desc.len() <= len);
    let mut v = vec![0.0; len];
    for (i, &c) in desc.iter().rev().enumerate() {
        v[i] = c;
    }
    v
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, c| a.max(c.abs()))
}

/// Lagrange-interpolation decomposition for simple roots:
/// `l_j = R(tau_j) / P_jhat(tau_j)`.
pub fn lagrange_decompose(r_desc: &[f64], p: &PointPoly) -> Result<Vec<f64>, DecompError> {
    let m = p.degree();
    if r_desc.len() > m {
        return Err(DecompError::DegreeTooHigh {
            deg: r_desc.len() - 1,
            max: m - 1,
        });
    }
    if let Some(c) = p.clusters.iter().find(|c| c.len() > 1) {
        return Err(DecompError::MultipleRoots { size: c.len() });
    }
    let red = reduced_polys(p);
    Ok((0..m)
        .map(|j| poly_eval(r_desc, p.roots[j]) / poly_eval(&red[j], p.roots[j]))
        .collect())
}

/// Min-norm solve of `sum_c nu_c col_c = rhs` with the columns pre-weighted;
/// returns `(nu, residual)`.
fn pinv_solve(cols: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, f64) {
    let rows = rhs.len();
    let a = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.clone().svd(true, true);
    let pinv = svd.pseudo_inverse(1e-12).expect("svd computed");
    let nu = &pinv * &b;
    let residual = (&a * &nu - &b).norm();
    (nu.iter().copied().collect(), residual)
}

/// Minimum-Euclidean-norm decomposition over the reduced basis with
/// coefficients tied inside each root cluster. `Infeasible` signals that the
/// symbol leaves the span, i.e. boundedness fails at this point.
pub fn minnorm_decompose(r_desc: &[f64], p: &PointPoly) -> Result<Decomposition, DecompError> {
    let m = p.degree();
    if r_desc.len() > m {
        return Err(DecompError::DegreeTooHigh {
            deg: r_desc.len() - 1,
            max: m - 1,
        });
    }
    let red = reduced_polys(p);
    let rhs = vec_asc(r_desc, m);

    // one unknown per cluster; minimizing sum_k l_k^2 with l tied means
    // minimizing sum_c size_c l_c^2, so weight each column by sqrt(size)
    let mut cols = Vec::with_capacity(p.clusters.len());
    for cl in &p.clusters {
        let mut col = vec![0.0; m];
        for k in cl.clone() {
            let v = vec_asc(&red[k], m);
            for i in 0..m {
                col[i] += v[i];
            }
        }
        let w = (cl.len() as f64).sqrt();
        for c in &mut col {
            *c /= w;
        }
        cols.push(col);
    }
    let (nu, residual) = pinv_solve(&cols, &rhs);
    let r_norm = sup_abs(&rhs);
    if residual > 1e-7 * (1.0 + r_norm) {
        return Err(DecompError::Infeasible { residual });
    }
    let mut coeffs = vec![0.0; m];
    for (c, cl) in p.clusters.iter().enumerate() {
        let l = nu[c] / (cl.len() as f64).sqrt();
        for k in cl.clone() {
            coeffs[k] = l;
        }
    }
    let bound = sup_abs(&coeffs);
    Ok(Decomposition {
        coeffs,
        pairs: vec![],
        bound,
        order: DecompOrder::First,
    })
}

/// Second-order decomposition over the bi-reduced basis, pairs tied whenever
/// their root-cluster pairs coincide.
pub fn second_order_decompose(s_desc: &[f64], p: &PointPoly) -> Result<Decomposition, DecompError> {
    let m = p.degree();
    assert!(m >= 2);
    if s_desc.len() > m - 1 {
        return Err(DecompError::DegreeTooHigh {
            deg: s_desc.len() - 1,
            max: m - 2,
        });
    }
    let bi = bireduced_polys(p);
    let pairs: Vec<(usize, usize)> = bi.iter().map(|(hk, _)| *hk).collect();
    let rhs = vec_asc(s_desc, m - 1);

    // group pairs by unordered cluster pair
    let mut groups: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for (i, &(h, k)) in pairs.iter().enumerate() {
        let mut key = (p.cluster_of(h), p.cluster_of(k));
        if key.0 > key.1 {
            key = (key.1, key.0);
        }
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let mut cols = Vec::with_capacity(groups.len());
    for (_, idx) in &groups {
        let mut col = vec![0.0; m - 1];
        for &i in idx {
            let v = vec_asc(&bi[i].1, m - 1);
            for j in 0..m - 1 {
                col[j] += v[j];
            }
        }
        let w = (idx.len() as f64).sqrt();
        for c in &mut col {
            *c /= w;
        }
        cols.push(col);
    }
    let (nu, residual) = pinv_solve(&cols, &rhs);
    if residual > 1e-7 * (1.0 + sup_abs(&rhs)) {
        return Err(DecompError::Infeasible { residual });
    }
    let mut coeffs = vec![0.0; pairs.len()];
    for (g, (_, idx)) in groups.iter().enumerate() {
        let l = nu[g] / (idx.len() as f64).sqrt();
        for &i in idx {
            coeffs[i] = l;
        }
    }
    let bound = sup_abs(&coeffs);
    Ok(Decomposition {
        coeffs,
        pairs,
        bound,
        order: DecompOrder::Second,
    })
}

/// Outcome of a boundedness sweep over a sampled grid.
#[derive(Debug, Clone, PartialEq)]
pub enum ProperCheck {
    Bounded { c0: f64 },
    Fails { t: f64, x: f64 },
}

/// Sweeps a `(t, x)` grid, decomposing the degree-`d` symbol with the given
/// expression coefficients (descending) against the monic tau-derivative of
/// matching degree `d + 1`. `c0` is the sup of coefficient magnitudes.
pub fn check_proper(
    r_exprs_desc: &[Expr],
    p: &HPoly,
    d: usize,
    grid: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<ProperCheck, DecompError> {
    assert!(r_exprs_desc.len() <= d + 1, "symbol degree exceeds d");
    assert!(d + 1 <= p.degree());
    let mut c0 = 0.0f64;
    for &(t, x) in grid {
        let md = p.monic_tau_derivative(d + 1, x, tol)?;
        let r_desc: Vec<f64> = r_exprs_desc
            .iter()
            .map(|e| e.eval(t, x))
            .collect::<Result<_, _>>()
            .map_err(HyperError::from)?;
        match minnorm_decompose(&r_desc, &md.point) {
            Ok(dec) => {
                c0 = c0.max(dec.bound);
                if c0 > 1e8 {
                    return Ok(ProperCheck::Fails { t, x });
                }
            }
            Err(DecompError::Infeasible { .. }) => return Ok(ProperCheck::Fails { t, x }),
            Err(e) => return Err(e),
        }
    }
    Ok(ProperCheck::Bounded { c0 })
}

/// Fisk's split `R = zeta d_tau p + (r0 - m zeta) Ptilde` with
/// `zeta = max_k l_k + 1`, so every `zeta - l_k` is positive and `Ptilde` is
/// hyperbolic and interlaced with `p`.
pub fn fisk_split(
    r_desc: &[f64],
    p: &PointPoly,
    l: &[f64],
    tol: &Tolerances,
) -> Result<(f64, Vec<f64>), DecompError> {
    let m = p.degree();
    assert_eq!(l.len(), m);
    let zeta = l.iter().fold(f64::NEG_INFINITY, |a, &c| a.max(c)) + 1.0;
    // leading coefficient of R as a degree-(m-1) symbol
    let r_full = {
        let mut v = vec_asc(r_desc, m);
        v.reverse();
        v
    };
    let r0 = r_full[0];
    let dp = crate::hyperpoly::poly_derivative(&p.coeffs);
    let denom = (m as f64) * zeta - r0;
    let ptilde: Vec<f64> = dp
        .iter()
        .zip(&r_full)
        .map(|(d, r)| (zeta * d - r) / denom)
        .collect();
    let pt = PointPoly::from_coeffs(&ptilde, p.x, tol)?;
    if !check_interlacing(&p.roots, &pt.roots, 0.0) {
        return Err(DecompError::InterlacingFailure);
    }
    Ok((zeta, ptilde))
}

/// Re-expands a decomposition w.r.t. `p` over the reduced basis of the
/// strictly hyperbolic approximant `p_eps`, and the a-priori coefficient
/// bound in terms of the shift/gap ratio of the two root sets.
pub fn transfer_to_nuij(
    l: &[f64],
    p: &PointPoly,
    p_eps: &PointPoly,
) -> Result<(Decomposition, f64), DecompError> {
    let m = p.degree();
    assert_eq!(p_eps.degree(), m);
    assert_eq!(l.len(), m);
    let red = reduced_polys(p);
    let mut coeffs = vec![0.0; m];
    for k in 0..m {
        let c = lagrange_decompose(&red[k], p_eps)?;
        for j in 0..m {
            coeffs[j] += l[k] * c[j];
        }
    }
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
    let r = shift / gap;
    let bound_cap =
        sup_abs(l) * ((1.0 + r).powi(m as i32 - 1) + (m as f64 - 1.0) * r * (1.0 + r).powi(m as i32 - 2));
    let bound = sup_abs(&coeffs);
    Ok((
        Decomposition {
            coeffs,
            pairs: vec![],
            bound,
            order: DecompOrder::First,
        },
        bound_cap,
    ))
}
