//! Closest point method discretization of the surface Helmholtz problem
//! `(c - Delta_S) u = f` with overlapping Schwarz solvers.

pub mod band;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod partition;
mod parallel;
pub mod report;
pub mod schwarz;
pub mod subdomain;

pub use band::{build_band, Band};
pub use error::{Error, Result};
pub use geometry::Surface;
pub use operators::{GlobalOperators, RhsPreset};
pub use report::{SolveReport, Termination};
