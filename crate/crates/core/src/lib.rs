//! Legendre star-product solver for the generalized Rosen-Zener model.

pub mod baseline_integrators;
pub mod bench_cli;
pub mod convergence_analysis;
pub mod error;
pub mod legendre_basis;
pub mod rz_model;
pub mod star_solver;

pub use error::{Error, Result};
pub use rz_model::{Case, RZModel, RZParameters, C64};
