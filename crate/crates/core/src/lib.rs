//! Numerical laboratory for one-dimensional quadratic BSDEs
//!
//! `Y_t = ξ − ∫_t^T g(s, Z_s) ds + ∫_t^T Z_s dB_s`
//!
//! with a generator `g = g1 + g2` split into a convex part and a uniformly
//! continuous perturbation, and exponentially integrable terminal values.

pub mod conjugate;
pub mod duality;
pub mod error;
pub mod generators;
pub mod numerics;
pub mod solver;
pub mod stochastics;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
