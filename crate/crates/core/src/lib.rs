//! Spectral two-moment radiation transport at `O(v/c)`.
//!
//! The crate solves the comoving-frame two-moment model with the Minerbo
//! closure on a discontinuous Galerkin phase-space discretization
//! (position × energy), with realizability-preserving fixed-point solvers,
//! limiters and IMEX time stepping, plus the benchmark harness that drives
//! the standard test problems.
//!
//! Module overview:
//!
//! * [`closure`] — exact and approximate Minerbo closure.
//! * [`moments`] — primitive/conserved moment types, fluxes and sources.
//! * [`solvers`] — conversion and collision fixed-point solvers.
//! * [`mesh`] — quadrature and the tensor-product phase-space mesh.
//! * [`dg`] — the semi-discrete DG operator.
//! * [`limiters`] — realizability and energy limiters.
//! * [`timestep`] — time-step control and integrators.
//! * [`analysis`] — wave-speed, bound and Lipschitz scans; balance diagnostics.
//! * [`harness`] — benchmark problems, configuration and CSV output.

pub mod analysis;
pub mod closure;
pub mod dg;
pub mod error;
pub mod harness;
pub mod limiters;
pub mod mesh;
pub mod moments;
pub mod solvers;
pub mod timestep;

pub use error::{Error, Result};
