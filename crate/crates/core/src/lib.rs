//! Finite-alphabet workbench for Wyner's common information: Rényi
//! divergences, the common-information program, strong-converse exponents,
//! typical-set enumeration and truncated synthesis codes.

pub mod ci;
pub mod divergence;
pub mod error;
pub mod exponent;
pub mod fixtures;
pub mod optim;
pub mod prob;
pub mod rng;
pub mod synthesis;
pub mod typicality;

pub use error::{Error, Result};
