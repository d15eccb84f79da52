//! Numerical laboratory for one-dimensional gravity-capillary water waves.

pub mod chebyshev;
pub mod cli;
pub mod config;
pub mod dno;
pub mod error;
pub mod evolution;
pub mod field;
pub mod linalg;
pub mod paradiff;
pub mod smoothing;
pub mod symbols;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Field, Grid};
