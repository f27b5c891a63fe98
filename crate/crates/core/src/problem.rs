//! The scalar Cauchy problem: principal part, lower-order symbols, forcing,
//! initial data and the cone geometry.

use crate::expr::Expr;
use crate::hyperpoly::HPoly;

/// A degree-`m` scalar equation
/// `P(x; d_t, d_x) u = sum_d R_d(t, x; d_t, d_x) u + f`, with initial data
/// `d_t^j u(0, x) = phi_j(x)` and a cone of dependence of radius `rho0`
/// around `x0`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub m: usize,
    pub principal: HPoly,
    /// `lower[d][k]` is `r_{d,k}(t,x)`, the coefficient of `tau^{d-k} xi^k`
    /// in the degree-`d` lower-order symbol; `0 <= k <= d <= m-1`.
    pub lower: Vec<Vec<Expr>>,
    pub forcing: Expr,
    /// `phi_0 .. phi_{m-1}`, functions of `x`.
    pub initial: Vec<Expr>,
    pub domain: (f64, f64),
    pub x0: f64,
    pub rho0: f64,
    pub t_end: f64,
}

impl Problem {
    /// Full dimension of the first-order reduction.
    pub fn system_dim(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.m < 2 {
            return Err("degree must be at least 2".into());
        }
        if self.principal.degree() != self.m {
            return Err("principal part degree mismatch".into());
        }
        if self.lower.len() != self.m {
            return Err(format!("expected {} lower-order rows", self.m));
        }
        for (d, row) in self.lower.iter().enumerate() {
            if row.len() != d + 1 {
                return Err(format!("lower-order row {d} must have {} entries", d + 1));
            }
        }
        if self.initial.len() != self.m {
            return Err(format!("expected {} initial data functions", self.m));
        }
        if self.rho0 <= 0.0 {
            return Err("cone radius must be positive".into());
        }
        if self.t_end <= 0.0 {
            return Err("time horizon must be positive".into());
        }
        if self.domain.0 >= self.domain.1 {
            return Err("empty spatial domain".into());
        }
        Ok(())
    }

    /// A problem with zero lower-order part, forcing, and data.
    pub fn homogeneous(principal: HPoly, domain: (f64, f64), x0: f64, rho0: f64, t_end: f64) -> Problem {
        let m = principal.degree();
        Problem {
            m,
            principal,
            lower: (0..m).map(|d| vec![Expr::zero(); d + 1]).collect(),
            forcing: Expr::zero(),
            initial: vec![Expr::zero(); m],
            domain,
            x0,
            rho0,
            t_end,
        }
    }
}
