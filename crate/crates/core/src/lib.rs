//! Constant-step stochastic gradient methods on finite-sum problems.
//!
//! The crate is organised around five pieces:
//!
//! * [`problems`]: finite sums `f = (1/n) Σ fᵢ` sampled uniformly, so every
//!   conditional expectation over the sampled index is an exact average.
//! * [`geometry`]: projections, proximity operators and resolvents of linear
//!   monotone operators (the backward half of every iteration).
//! * [`solvers`]: SGM, projected SGM, proximal SGM and the resolvent iteration,
//!   driven by a seedable counter-based random stream.
//! * [`growth`]: exact computation of growth constants (strong, plain and weak
//!   growth) and of the one-step necessary-condition inequality.
//! * [`analysis`]: replication ensembles, log-linear rate fits, noise-floor
//!   predictions and the decaying-step `O(1/t)` check.

pub mod analysis;
pub mod geometry;
pub mod growth;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod solvers;

pub use nalgebra::{DMatrix, DVector};
