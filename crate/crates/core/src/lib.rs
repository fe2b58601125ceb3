//! Relative pose of three gravity-aligned views from point triplets.
//!
//! Observations are first rotated by the pitch and roll reported by an IMU,
//! which leaves one yaw angle and a translation per view pair. Two solvers
//! recover that motion: a linear one from four triplets and a minimal one
//! from three. Both plug into a RANSAC loop through [`solver::TripletSolver`].

// NaN-rejecting comparisons such as `!(x > 0.0)` are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod dataset;
pub mod error;
pub mod format;
pub mod geometry;
pub mod linear;
pub mod minimal;
pub mod poly;
pub mod ransac;
pub mod refine;
pub mod sequence;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
