//! Replica formula for finite-rank symmetric tensor factorization, with
//! exact small-n oracles and adaptive-interpolation checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod interpolation;
pub mod model;
pub mod prior;
pub mod quadrature;
pub mod replica;
pub mod rng;
pub mod stats;
pub mod symmat;

pub use error::{Error, Result};
pub use prior::{Prior, SecondMoment};
pub use quadrature::QuadratureSpec;
pub use replica::{h_p, lambda_sweep, solve_replica, PsiEvaluator, ReplicaSolution, SolverConfig};
pub use symmat::{PerturbationBox, SymMatrix};

/// Scientific notation with 16 fractional digits, the format of every written float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
