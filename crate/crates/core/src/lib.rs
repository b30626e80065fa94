//! Monotone finite element discretisation of time-dependent mean field games
//! whose Hamiltonian is convex but not necessarily differentiable.
//!
//! The density equation is treated as a partial differential inclusion: the
//! transport field is any measurable selection from the subdifferential of the
//! Hamiltonian evaluated at the discrete value-function gradient. The scheme
//! combines continuous P1 elements on conforming triangulations, mass lumping,
//! an edge-based artificial diffusion that restores the discrete maximum
//! principle, and implicit Euler in time (backward for the HJB equation,
//! forward for the KFP equation).
//!
//! The crate is `no_std` and only needs an allocator. File formats, command
//! line handling and reporting live in the companion `mfg-cli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod assembly;
mod error;
pub mod hamiltonian;
pub mod linsolve;
pub mod math;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod timestepping;

pub use error::{Error, Result};
