//! Double greedy construction of stable reduced trial/test space pairs for
//! parametric transport-dominated problems.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod fem_grid;
pub mod greedy_driver;
pub mod la_core;
pub mod parametric_problem;
pub mod saddle_solver;
pub mod stabilization;

pub use error::{Error, Result};
