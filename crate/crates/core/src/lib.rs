//! Estimators, accuracy scores and simulation-allocation strategies for
//! likelihood-free inference, with a benchmark harness for desk-scale
//! experiments.

pub mod allocation;
pub mod bench;
pub mod error;
pub mod estimators;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod samplers;
pub mod scores;
pub mod smc;

pub use error::{LfiError, Result};
