//! Sparse layers parametrized by continuous index tuples.
//!
//! A layer holds `k` continuous tuples (means), one spread scalar and one
//! value per tuple. Every forward pass samples a set of integer index
//! tuples around the means, weighs them by a diagonal Gaussian, and
//! distributes each value over its samples. The resulting sparse matrix is
//! multiplied with the input; gradients reach the tuple parameters only
//! through the distributed values.

mod cantor;
mod flatten;
mod layer;
mod ops;
mod sampling;

pub use cantor::{cantor_pair, cantor_tuple, mask_duplicates, mask_duplicates_blocked};
pub use flatten::{flat_to_tuple, flatten_assemble, flatten_index};
pub use layer::{
    distribute_values, expand_sigma, map_tuples, ContinuousTupleSet, LayerSample, SparseLayer,
};
pub use ops::{
    blocked_proportions, gaussian_log_density, normalize_and_distribute, own_log_density, proportions, sparse_mm,
    spmm_flat, SparseCoo,
};
pub(crate) use sampling::round_index;
pub use sampling::{
    expand_sigma_row, map_tuple, nearest_corners, sample_global, sample_local, sample_tuples,
};

use crate::error::{config_err, Result};

/// Dims of a weight tensor mapping `input_dims` to `output_dims`.
/// Index tuples list the output part first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperlayerShape {
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
}

impl HyperlayerShape {
    pub fn new(input_dims: Vec<usize>, output_dims: Vec<usize>) -> Result<Self> {
        if input_dims.is_empty() || output_dims.is_empty() {
            return Err(config_err("hyperlayer needs at least one input and one output dim"));
        }
        if input_dims.iter().chain(&output_dims).any(|&d| d == 0) {
            return Err(config_err("hyperlayer dims must be positive"));
        }
        Ok(Self { input_dims, output_dims })
    }

    /// Square matrix layer `n -> n`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(vec![n], vec![n])
    }

    pub fn rank(&self) -> usize {
        self.input_dims.len() + self.output_dims.len()
    }

    /// `(o_1..o_m, i_1..i_n)`.
    pub fn dims(&self) -> Vec<usize> {
        self.output_dims.iter().chain(&self.input_dims).copied().collect()
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_dims.iter().product()
    }
}

/// How many integer tuples to draw per continuous tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingConfig {
    pub local: usize,
    pub global: usize,
    pub region: Vec<usize>,
}

impl SamplingConfig {
    pub fn new(local: usize, global: usize, region: Vec<usize>) -> Self {
        Self { local, global, region }
    }

    /// Only the nearest corners.
    pub fn corners_only(rank: usize) -> Self {
        Self::new(0, 0, vec![1; rank])
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        if self.region.len() != dims.len() {
            return Err(config_err(format!(
                "sampling region has rank {}, layer has rank {}",
                self.region.len(),
                dims.len()
            )));
        }
        for (&l, &h) in self.region.iter().zip(dims) {
            if l == 0 || l > h {
                return Err(config_err(format!("region size {l} not in [1, {h}]")));
            }
        }
        Ok(())
    }

    /// Integer tuples per continuous tuple: `2^r + a_l + a_g`.
    pub fn per_tuple(&self, rank: usize) -> usize {
        (1 << rank) + self.local + self.global
    }
}

/// Integer index tuples stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntTuples {
    rank: usize,
    data: Vec<usize>,
}

impl IntTuples {
    pub fn new(rank: usize) -> Self {
        Self { rank, data: Vec::new() }
    }

    pub fn from_rows(rank: usize, rows: &[Vec<usize>]) -> Self {
        let mut out = Self::new(rank);
        for r in rows {
            out.push(r);
        }
        out
    }

    pub fn with_capacity(rank: usize, rows: usize) -> Self {
        Self {
            rank,
            data: Vec::with_capacity(rank * rows),
        }
    }

    pub fn push(&mut self, tuple: &[usize]) {
        assert_eq!(tuple.len(), self.rank);
        self.data.extend_from_slice(tuple);
    }

    pub fn extend(&mut self, other: &IntTuples) {
        assert_eq!(other.rank, self.rank);
        self.data.extend_from_slice(&other.data);
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        if self.rank == 0 {
            0
        } else {
            self.data.len() / self.rank
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.data[i * self.rank..(i + 1) * self.rank]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.data.chunks(self.rank.max(1))
    }

    pub fn in_bounds(&self, dims: &[usize]) -> bool {
        self.rows().all(|t| t.iter().zip(dims).all(|(&a, &h)| a < h))
    }
}
