//! Weighted rate-distortion computations for the Gray-Wyner network.
//!
//! [`ba_core`] runs the alternating minimization for finite sources,
//! [`rd_solver`] wraps it in a multiplier search for target distortions and
//! [`gaussian`] has the closed forms for bivariate Gaussian sources.

pub mod ba_core;
pub mod error;
pub mod gaussian;
pub mod model;
pub mod rd_solver;

pub use error::{Error, Result};
