//! Numerical kernel for multi-dimensional continuous-state branching
//! processes: branching mechanisms, the backward equation for the cumulant
//! semigroup, pathwise simulation, and Monte Carlo cross-checks between the
//! two representations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cumulant;
pub mod error;
pub mod levy;
pub mod mechanism;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod simulator;
pub mod verify;

pub use error::{CbError, Result};
pub use mechanism::{BranchingMechanism, LeftHalfPoint, MechanismRow};
