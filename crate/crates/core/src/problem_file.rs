//! On-disk problem description (TOML or JSON) and its conversion into a
//! validated [`Problem`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expr, Expr};
use crate::hyperpoly::HPoly;
use crate::problem::Problem;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("invalid formula {field:?}: {msg} at offset {offset}")]
    Formula {
        field: String,
        msg: String,
        offset: usize,
    },
    #[error("invalid problem: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSpec {
    pub x0: f64,
    pub rho0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.5
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dx: 0.01,
            cfl: default_cfl(),
        }
    }
}

/// Options for the hypothesis checks and the empirical bound estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckSpec {
    /// Spatial sample count over the domain.
    #[serde(default = "default_nx")]
    pub nx: usize,
    /// Temporal sample count over `[0, T]`.
    #[serde(default = "default_nt")]
    pub nt: usize,
    /// Random vectors per grid point for the bound estimates.
    #[serde(default = "default_nv")]
    pub n_random_v: usize,
}

fn default_nx() -> usize {
    41
}
fn default_nt() -> usize {
    5
}
fn default_nv() -> usize {
    32
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            nx: default_nx(),
            nt: default_nt(),
            n_random_v: default_nv(),
        }
    }
}

/// The document schema. All formulas are strings in the expression language
/// (variables `t`, `x`); `principal` lists `a_1 .. a_m`; `lower[d]` lists
/// `r_{d,0} .. r_{d,d}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub m: usize,
    pub principal: Vec<String>,
    #[serde(default)]
    pub lower: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub forcing: Option<String>,
    #[serde(default)]
    pub initial: Option<Vec<String>>,
    pub domain: [f64; 2],
    pub cone: ConeSpec,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

fn parse_field(field: &str, src: &str) -> Result<Expr, FileError> {
    use crate::expr::ExprError;
    parse_expr(src).map_err(|e| {
        let (msg, offset) = match e {
            ExprError::Syntax { offset, msg } => (msg, offset),
            ExprError::UnknownIdent { offset, name } => {
                (format!("unknown identifier `{name}`"), offset)
            }
            other => (other.to_string(), 0),
        };
        FileError::Formula {
            field: field.to_string(),
            msg,
            offset,
        }
    })
}

impl ProblemFile {
    /// Loads TOML (default) or JSON (by `.json` extension).
    pub fn load(path: &std::path::Path) -> Result<ProblemFile, FileError> {
        let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let pf: ProblemFile = if is_json {
            serde_json::from_str(&text).map_err(|e| FileError::Format {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| FileError::Format {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?
        };
        Ok(pf)
    }

    pub fn to_problem(&self) -> Result<Problem, FileError> {
        if self.principal.len() != self.m {
            return Err(FileError::Validation(format!(
                "principal must list {} coefficients, found {}",
                self.m,
                self.principal.len()
            )));
        }
        let coeffs = self
            .principal
            .iter()
            .enumerate()
            .map(|(i, s)| parse_field(&format!("principal[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let lower = match &self.lower {
            None => (0..self.m).map(|d| vec![Expr::zero(); d + 1]).collect(),
            Some(rows) => {
                if rows.len() != self.m {
                    return Err(FileError::Validation(format!(
                        "lower must have {} rows, found {}",
                        self.m,
                        rows.len()
                    )));
                }
                let mut out = Vec::with_capacity(self.m);
                for (d, row) in rows.iter().enumerate() {
                    if row.len() != d + 1 {
                        return Err(FileError::Validation(format!(
                            "lower[{d}] must have {} entries, found {}",
                            d + 1,
                            row.len()
                        )));
                    }
                    out.push(
                        row.iter()
                            .enumerate()
                            .map(|(k, s)| parse_field(&format!("lower[{d}][{k}]"), s))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                out
            }
        };
        let forcing = match &self.forcing {
            None => Expr::zero(),
            Some(s) => parse_field("forcing", s)?,
        };
        let initial = match &self.initial {
            None => vec![Expr::zero(); self.m],
            Some(v) => {
                if v.len() != self.m {
                    return Err(FileError::Validation(format!(
                        "initial must list {} functions, found {}",
                        self.m,
                        v.len()
                    )));
                }
                v.iter()
                    .enumerate()
                    .map(|(j, s)| parse_field(&format!("initial[{j}]"), s))
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let problem = Problem {
            m: self.m,
            principal: HPoly::new(coeffs),
            lower,
            forcing,
            initial,
            domain: (self.domain[0], self.domain[1]),
            x0: self.cone.x0,
            rho0: self.cone.rho0,
            t_end: self.t_end,
        };
        problem.validate().map_err(FileError::Validation)?;
        Ok(problem)
    }

    /// Evenly spaced spatial sample points over the domain.
    pub fn sample_xs(&self, nx: usize) -> Vec<f64> {
        let n = nx.max(2);
        (0..n)
            .map(|i| {
                self.domain[0] + (self.domain[1] - self.domain[0]) * i as f64 / (n - 1) as f64
            })
            .collect()
    }

    /// Space-time sample grid for the decomposability checks.
    pub fn sample_grid(&self, nx: usize) -> Vec<(f64, f64)> {
        let nt = self.check.nt.max(1);
        let mut out = Vec::new();
        for j in 0..nt {
            let t = if nt == 1 {
                0.0
            } else {
                self.t_end * j as f64 / (nt - 1) as f64
            };
            for x in self.sample_xs(nx) {
                out.push((t, x));
            }
        }
        out
    }

    /// Rebuilds a document from a [`Problem`], printing formulas back out;
    /// used to emit derived problems.
    pub fn from_problem(problem: &Problem, template: &ProblemFile) -> ProblemFile {
        ProblemFile {
            m: problem.m,
            principal: problem
                .principal
                .coeff_exprs()
                .iter()
                .map(|e| e.to_string())
                .collect(),
            lower: Some(
                problem
                    .lower
                    .iter()
                    .map(|row| row.iter().map(|e| e.to_string()).collect())
                    .collect(),
            ),
            forcing: Some(problem.forcing.to_string()),
            initial: Some(problem.initial.iter().map(|e| e.to_string()).collect()),
            domain: [problem.domain.0, problem.domain.1],
            cone: ConeSpec {
                x0: problem.x0,
                rho0: problem.rho0,
            },
            t_end: problem.t_end,
            grid: template.grid.clone(),
            check: template.check.clone(),
            epsilons: template.epsilons.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const WAVE_TOML: &str = r#"
m = 2
principal = ["0", "-1"]
initial = ["exp(-4*(x+1)^2)", "8*(x+1)*exp(-4*(x+1)^2)"]
domain = [-3.0, 3.0]
T = 1.0

[cone]
x0 = 0.0
rho0 = 2.0

[grid]
dx = 0.005
"#;

    #[test]
    fn toml_roundtrip() {
        let mut f = tempfile::NamedTempFile::with_suffix(".toml").unwrap();
        f.write_all(WAVE_TOML.as_bytes()).unwrap();
        let pf = ProblemFile::load(f.path()).unwrap();
        assert_eq!(pf.m, 2);
        assert_eq!(pf.grid.cfl, 0.5);
        assert_eq!(pf.check.nx, 41);
        let p = pf.to_problem().unwrap();
        assert_eq!(p.system_dim(), 3);
        assert!(p.lower.iter().flatten().all(|e| e.is_zero_literal()));
    }

    #[test]
    fn json_load() {
        let doc = serde_json::json!({
            "m": 2,
            "principal": ["0", "-1 - x^2"],
            "domain": [-1.0, 1.0],
            "cone": {"x0": 0.0, "rho0": 0.5},
            "T": 0.2,
            "epsilons": [0.1, 0.01]
        });
        let mut f = tempfile::NamedTempFile::with_suffix(".json").unwrap();
        f.write_all(doc.to_string().as_bytes()).unwrap();
        let pf = ProblemFile::load(f.path()).unwrap();
        assert_eq!(pf.epsilons, vec![0.1, 0.01]);
        pf.to_problem().unwrap();
    }

    #[test]
    fn formula_error_carries_offset() {
        let mut pf: ProblemFile = toml::from_str(WAVE_TOML.trim()).unwrap();
        pf.principal[1] = "1 + (2".into();
        match pf.to_problem() {
            Err(FileError::Formula { field, offset, .. }) => {
                assert_eq!(field, "principal[1]");
                assert!(offset >= 4);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn shape_validation() {
        let mut pf: ProblemFile = toml::from_str(WAVE_TOML.trim()).unwrap();
        pf.lower = Some(vec![vec!["0".into()]]);
        assert!(matches!(pf.to_problem(), Err(FileError::Validation(_))));
        pf.lower = Some(vec![vec!["0".into()], vec!["0".into(), "x".into()]]);
        let p = pf.to_problem().unwrap();
        assert!(!p.lower[1][1].is_zero_literal());
    }

    #[test]
    fn emit_roundtrip() {
        let pf: ProblemFile = toml::from_str(WAVE_TOML.trim()).unwrap();
        let p = pf.to_problem().unwrap();
        let out = ProblemFile::from_problem(&p, &pf);
        let text = toml::to_string_pretty(&out).unwrap();
        let back: ProblemFile = toml::from_str(&text).unwrap();
        let p2 = back.to_problem().unwrap();
        for (a, b) in p.initial.iter().zip(&p2.initial) {
            for x in [-0.7, 0.0, 1.3] {
                assert!((a.eval(0.0, x).unwrap() - b.eval(0.0, x).unwrap()).abs() < 1e-12);
            }
        }
    }
}
