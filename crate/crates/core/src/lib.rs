//! Adaptive sparse hyperlayers and differentiable quicksort.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense `f64` tensors and a reverse-mode tape with Adam.
//! - [`sparse`]: sparse layers parametrized by continuous index tuples.
//! - [`glimpse`]: the constrained hyperlayer used for visual attention.
//! - [`sort`]: half-permutations and the differentiable quicksort.
//! - [`reinforce`]: the score-function baseline for the identity task.
//! - [`experiments`]: seeded runners and metric files behind the `sparse-hyper` binary.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod glimpse;
pub mod reinforce;
pub mod rng;
pub mod sort;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
