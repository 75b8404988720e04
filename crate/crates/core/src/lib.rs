//! Data-driven continuous-time LQR under two trajectory parameterizations,
//! with a model-based reference oracle, a dense conic solver for the SDP
//! formulations, and a reproducible benchmark suite.

pub mod cl;
pub mod conic;
pub mod emit;
pub mod error;
pub mod irl;
pub mod linalg;
pub mod iterate;
pub mod oracle;
pub mod sim;
pub mod suite;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix, Vector};
