//! Numerical laboratory for a selection-mutation model with horizontal gene
//! transfer: the small-mutation equation in Hopf-Cole form, its constrained
//! Hamilton-Jacobi limit, regime thresholds and variational oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod grid;
pub mod kernels;
pub mod model;
pub mod parallel;
pub mod roots;
pub mod config;
pub mod diagnostics;
pub mod record;
pub mod eps_solver;
pub mod limit_solver;
pub mod oracle;
pub mod crosscheck;
