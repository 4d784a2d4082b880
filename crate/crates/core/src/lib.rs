//! Score estimation for Gaussian-smoothed densities on [-1, 1].

pub mod acceptance;
pub mod bump;
pub mod density;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod kernel;
pub mod lower_bound;
pub mod oracle;
pub mod quadrature;
pub mod risk;
pub mod sampler;
pub mod score;
pub mod seed;

pub use error::{Error, Result};
