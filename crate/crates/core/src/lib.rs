//! Adaptive canonicalization by prior maximization.
//!
//! A classifier picks, per input and per class, the transformation that
//! maximizes a prior applied to that class's logit, then reads the
//! transformed input with a network that has no built-in symmetry. The
//! generic engine lives in [`canon`]; [`spectral`] specializes it to
//! per-band orthogonal reorientation of graph spectral coefficients and
//! [`pointcloud`] to 3D rotations of point clouds.
//!
//! Everything here is `no_std` with `alloc`. Randomness flows through
//! [`RngStream`], so every result is a function of explicit seeds.
#![no_std]
extern crate alloc;

pub mod canon;
pub mod data;
pub mod error;
pub mod groups;
pub mod linalg;
pub mod nn;
pub mod pointcloud;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::{EigenPairs, Matrix};
pub use rng::RngStream;
