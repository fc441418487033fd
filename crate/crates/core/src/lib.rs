//! Worst-case instances, a resisting oracle and matching upper-bound solvers
//! for strongly convex optimization with Lipschitz `k`-th derivatives.

pub mod adversary;
pub mod error;
pub mod harness;
pub mod minimizer;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod precision;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
