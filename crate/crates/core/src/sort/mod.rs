//! Differentiable quicksort built from relaxed half-permutations.
//!
//! A half-permutation of order `d` splits the input into `2^(d-1)` chunks
//! and, inside each chunk, moves the elements flagged `0` to the lower half
//! and those flagged `1` to the upper half while keeping their relative
//! order. With flags from a median comparison, composing the orders
//! `1..=log2 n` sorts the input ascending. The relaxed version mixes
//! randomly sampled half-permutations, weighted by how well each agrees with
//! sigmoid-softened flags, so the keys receive a gradient.

mod halfperm;
mod median;
mod quicksort;
mod task;

pub use halfperm::{
    identity_o, o_to_rows, round_o, sample_half_perms, HalfPermSpec, PermTable, PermTables,
    RelaxedHalfPerm,
};
pub use median::{chunk_median, chunk_median_var, chunk_size, hard_o, relax_logits, relax_o};
pub use quicksort::{intermediate_loss, quicksort_forward, SortConfig, SortTrace};
pub use task::{argsort, evaluate_permutation_error, synthetic_sort_task, KeyNet, SortInstance};

/// Default sigmoid sharpness for the relaxed flags.
pub const DEFAULT_TEMPERATURE: f64 = 10.0;
