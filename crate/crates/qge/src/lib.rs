//! Conforming C1 finite element solver for the streamfunction form of the
//! unsteady quasi-geostrophic equations on rectangular basins.
//!
//! The discretization uses the quintic Argyris triangle on a structured
//! right-triangle mesh, implicit Euler time stepping with a Newton solve for
//! the nonlinear advection term, and a manufactured-solution harness that
//! measures spatial and temporal convergence rates.

pub mod argyris;
pub mod config;
pub mod error;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod newton;
pub mod params;
pub mod quadrature;
pub mod sparse;
pub mod stepper;

pub use error::QgeError;
