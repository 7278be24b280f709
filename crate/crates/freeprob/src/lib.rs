//! Numerical free probability toolkit.
//!
//! Computes n-fold free multiplicative convolutions through the S-transform
//! calculus, evaluates norm-growth bounds for products and symmetric products
//! of free random variables, and cross-checks both against a random-matrix
//! Monte Carlo harness built on Haar-orthogonal conjugations.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod freeconv;
pub mod measure;
pub mod rmtlab;
pub mod series;
pub mod transforms;

pub use error::{Error, Result};
