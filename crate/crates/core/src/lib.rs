//! Constructive machinery for weakly hyperbolic Cauchy problems in one
//! space variable: reduced polynomials, symmetrizers, proper decompositions,
//! the first-order block reduction, and a finite-difference energy harness.

pub mod cli;
pub mod decomposition;
pub mod expr;
pub mod hyperpoly;
pub mod problem;
pub mod problem_file;
pub mod solver;
pub mod symmetrizer;
