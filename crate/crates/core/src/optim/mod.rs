//! Numerical optimizers.

pub mod cmaes;
pub mod lbfgsb;

pub use lbfgsb::{LbfgsbOptions, Objective, Solution, Termination};
