//! Computational toolkit for two-weight estimates of the Hilbert transform on
//! discrete measures: weighted Haar systems on shifted dyadic lattices, good
//! and bad intervals, stopping trees, paraproducts and the constants that
//! govern boundedness.

pub mod cli;
pub mod constants;
pub mod corona;
pub mod dyadic;
pub mod error;
pub mod explorer;
pub mod extended;
pub mod goodbad;
pub mod haar;
pub mod harness;
pub mod linalg;
pub mod measure;
pub mod paraproduct;
pub mod transform;
pub mod tree;

pub use error::{Error, Result};
