use crate::autodiff::Var;
use crate::error::Result;
use crate::tensor::Tensor;

/// Raw source outputs `[b, 4g]` to boxes `[b * g, 4]` of
/// `(row_lo, col_lo, row_hi, col_hi)` in pixel coordinates.
pub fn box_from_raw<'t>(raw: &Var<'t>, glimpses: usize, height: usize, width: usize) -> Result<Var<'t>> {
    let b = raw.shape()[0];
    let (h, w) = (height as f64, width as f64);
    raw.reshape(vec![b * glimpses, 4])?
        .sigmoid()
        .mul_row_const(&[h, w, h, w])
}

/// `[4, 2 k^2]` matrix taking a box to its grid: point `p = i k + j` gets
/// row `lo + i (hi - lo) / (k - 1)` and the matching column. For `k = 1`
/// the single point is the box centre.
pub fn grid_matrix(k: usize) -> Tensor {
    let frac = |i: usize| if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
    let cols = 2 * k * k;
    let mut g = Tensor::zeros(&[4, cols]);
    for i in 0..k {
        for j in 0..k {
            let p = i * k + j;
            let (a, b) = (frac(i), frac(j));
            let d = g.data_mut();
            d[2 * p] = 1.0 - a; // row_lo
            d[2 * cols + 2 * p] = a; // row_hi
            d[cols + 2 * p + 1] = 1.0 - b; // col_lo
            d[3 * cols + 2 * p + 1] = b; // col_hi
        }
    }
    g
}

/// Boxes `[n, 4]` to continuous `(row, col)` tuples `[n k^2, 2]`.
pub fn bbox_to_grid<'t>(boxes: &Var<'t>, k: usize) -> Result<Var<'t>> {
    let n = boxes.shape()[0];
    let g = boxes.tape().constant(grid_matrix(k));
    boxes.matmul(&g)?.reshape(vec![n * k * k, 2])
}
