//! Flattening of index tuples into matrix coordinates.

use super::{HyperlayerShape, IntTuples};

/// Row-major flat index `sum_i a_i * prod_{j>i} n_j`.
pub fn flatten_index(tuple: &[usize], dims: &[usize]) -> usize {
    crate::tensor::flat_index(tuple, dims)
}

/// Inverse of [`flatten_index`].
pub fn flat_to_tuple(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &n) in out.iter_mut().zip(dims).rev() {
        *slot = flat % n;
        flat /= n;
    }
    out
}

/// Maps every `(b_1..b_m, a_1..a_n)` tuple to a `(row, col)` pair of the
/// flattened matrix. Rows belonging to batch instance `q` are shifted into
/// the `q`-th diagonal block of a block-diagonal `b*m x b*n` matrix.
pub fn flatten_assemble(
    tuples: &IntTuples,
    shape: &HyperlayerShape,
    batch_index: Option<&[usize]>,
) -> (Vec<usize>, Vec<usize>) {
    let m = shape.output_dims.len();
    let (out_len, in_len) = (shape.output_len(), shape.input_len());
    let mut rows = Vec::with_capacity(tuples.len());
    let mut cols = Vec::with_capacity(tuples.len());
    for (j, t) in tuples.rows().enumerate() {
        let q = batch_index.map_or(0, |b| b[j]);
        rows.push(q * out_len + flatten_index(&t[..m], &shape.output_dims));
        cols.push(q * in_len + flatten_index(&t[m..], &shape.input_dims));
    }
    (rows, cols)
}
