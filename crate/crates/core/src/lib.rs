//! Numerical verification of the stochastic-path route to quantum
//! mechanics: transition amplitudes, density matrices, velocity moments and
//! the identities that tie them together.

pub mod action;
pub mod bell;
pub mod error;
pub mod evolution;
pub mod extrapolate;
pub mod grid;
pub mod hamiltonian;
pub mod harness;
pub mod hj;
pub mod io;
pub mod moments;
pub mod oracles;
pub mod state;

pub use error::{Error, Result};
