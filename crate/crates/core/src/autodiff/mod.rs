//! A small reverse-mode automatic differentiation engine over dense tensors.
//!
//! Forward computations are recorded on a [`Tape`] as they run. Calling
//! [`Tape::backward`] on a scalar node walks the tape once in reverse and
//! returns the gradient of every leaf that requires one. Parameters live in a
//! [`ParamStore`] and are loaded onto a fresh tape for each forward pass, so
//! gradients from several passes can be summed with [`Gradients::accumulate`].

mod nn;
mod ops;
mod optim;
mod tape;

pub use nn::{glorot_uniform, Linear, Mlp};
pub use ops::{sigmoid, softplus, BCE_CLAMP};
pub use optim::{Adam, AdamConfig};
pub use tape::{BackwardFn, Gradients, ParamId, ParamStore, Tape, Var};
