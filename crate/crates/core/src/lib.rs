//! Point-electrode impedance tomography on polygonal domains.
//!
//! The crate simulates relative two-electrode ("bisweep") measurements with a
//! P1 finite-element solver and a Schwarz–Christoffel map to the unit disk,
//! converts them to a relative Neumann-to-Dirichlet matrix in a trigonometric
//! basis, and locates inclusions with the factorization method.

pub mod conformal;
pub mod diskgreens;
pub mod domain;
pub mod error;
pub mod factorization;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod pipeline;
pub mod quadrature;
pub mod rng;

pub use error::{Error, ErrorCategory, Result};
