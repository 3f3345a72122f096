//! Nonsmooth Newton methods with effective subspaces for composite problems
//! `min f(x) + g(x)`, with `f` smooth convex and `g` polyhedral.

pub mod bench;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod ext_real;
pub mod losses;
pub mod newton;
pub mod problem;
pub mod regularizers;
pub mod solvers;
pub mod subspace;

pub use error::{Error, Result};
pub use ext_real::ExtReal;
pub use problem::{
    fenchel_young_check, kkt_residual, objective, ProblemInstance, ProblemSpec, Regularizer, SmoothLoss,
};
pub use subspace::SubspaceBasis;
