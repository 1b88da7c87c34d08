//! Monte Carlo engine for slow–fast jump-diffusions with jump-corrupted
//! observations: path simulation, averaging of the slow coefficients over the
//! fast invariant law, and particle filters for the full and averaged
//! systems.

pub mod averaging;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod filter;
pub mod models;
pub mod noise;
pub mod quadrature;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
