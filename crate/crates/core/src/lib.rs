//! Numerical toolkit for boundary blow-up of the prescribed Gaussian and
//! geodesic curvature problem on the unit disk.

pub mod ansatz_residual;
pub mod boundary_ops;
pub mod curvature_model;
pub mod disk_geometry;
pub mod error;
pub mod identity_lab;
pub mod quadrature;
pub mod reduction;
pub mod spectral_solver;

pub use error::{Error, Result};
