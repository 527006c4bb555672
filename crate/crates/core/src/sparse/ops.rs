use super::{flatten_assemble, HyperlayerShape, IntTuples};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::f64::consts::PI;

/// A sampled sparse matrix: integer index tuples `D'` with differentiable values `v'`.
#[derive(Debug, Clone)]
pub struct SparseCoo<'t> {
    pub indices: IntTuples,
    pub values: Var<'t>,
    pub shape: HyperlayerShape,
}

impl<'t> SparseCoo<'t> {
    pub fn new(indices: IntTuples, values: Var<'t>, shape: HyperlayerShape) -> Result<Self> {
        let dims = shape.dims();
        if indices.rank() != dims.len() || values.shape() != [indices.len()] {
            return Err(Error::ShapeMismatch {
                op: "sparse_coo",
                left: vec![indices.len(), indices.rank()],
                right: values.shape(),
            });
        }
        if let Some(bad) = indices
            .rows()
            .find(|t| t.iter().zip(&dims).any(|(&a, &h)| a >= h))
        {
            return Err(Error::IndexOutOfBounds {
                tuple: bad.to_vec(),
                dims,
            });
        }
        Ok(Self { indices, values, shape })
    }

    /// Dense copy of the weight matrix as `[output_len, input_len]`.
    pub fn to_dense(&self) -> Tensor {
        let (rows, cols) = flatten_assemble(&self.indices, &self.shape, None);
        let n_in = self.shape.input_len();
        let mut dense = Tensor::zeros(&[self.shape.output_len(), n_in]);
        self.values.with_value(|v| {
            for ((&r, &c), &x) in rows.iter().zip(&cols).zip(v.data()) {
                dense.data_mut()[r * n_in + c] += x;
            }
        });
        dense
    }
}

struct DensityLayout {
    k: usize,
    r: usize,
    /// columns per row of the output
    cols: usize,
    /// blocked: row `i` only sees tuples `i*cols .. (i+1)*cols`
    blocked: bool,
}

impl DensityLayout {
    #[inline]
    fn tuple_index(&self, i: usize, c: usize) -> usize {
        if self.blocked {
            i * self.cols + c
        } else {
            c
        }
    }
}

/// Points at which densities are evaluated, row-major `[N, r]`.
struct Points {
    rank: usize,
    data: Vec<f64>,
}

impl Points {
    fn from_tuples(t: &IntTuples) -> Self {
        Self {
            rank: t.rank(),
            data: t.rows().flatten().map(|&x| x as f64).collect(),
        }
    }

    fn len(&self) -> usize {
        self.data.len() / self.rank.max(1)
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.rank..(i + 1) * self.rank]
    }
}

fn density_op<'t>(
    means: &Var<'t>,
    vars: &Var<'t>,
    tuples: Points,
    blocked: bool,
    log: bool,
) -> Result<Var<'t>> {
    let shape = means.shape();
    if shape.len() != 2 || vars.shape() != shape || tuples.rank != shape[1] {
        return Err(Error::ShapeMismatch {
            op: "gaussian_density",
            left: shape,
            right: vec![tuples.len(), tuples.rank],
        });
    }
    let (k, r) = (shape[0], shape[1]);
    let cols = if blocked {
        if k == 0 || tuples.len() % k != 0 {
            return Err(Error::ShapeMismatch {
                op: "blocked_proportions",
                left: vec![k],
                right: vec![tuples.len()],
            });
        }
        tuples.len() / k
    } else {
        tuples.len()
    };
    let layout = DensityLayout { k, r, cols, blocked };
    let mu = means.value();
    let var = vars.value();

    let mut out = vec![0.0; k * cols];
    for i in 0..k {
        let m = &mu.data()[i * r..(i + 1) * r];
        let v = &var.data()[i * r..(i + 1) * r];
        let norm: f64 = v.iter().map(|s| -0.5 * (2.0 * PI * s).ln()).sum();
        for c in 0..cols {
            let x = tuples.row(layout.tuple_index(i, c));
            let mut l = norm;
            for t in 0..r {
                let d = x[t] - m[t];
                l -= d * d / (2.0 * v[t]);
            }
            out[i * cols + c] = if log { l } else { l.exp() };
        }
    }
    let value = Tensor::from_parts(vec![k, cols], out);

    Ok(means.tape().custom(
        &[*means, *vars],
        value,
        Box::new(move |g, inputs, out| {
            let DensityLayout { k, r, cols, .. } = layout;
            let (mu, var) = (inputs[0].data(), inputs[1].data());
            let mut gm = vec![0.0; k * r];
            let mut gv = vec![0.0; k * r];
            for i in 0..k {
                let m = &mu[i * r..(i + 1) * r];
                let v = &var[i * r..(i + 1) * r];
                for c in 0..cols {
                    let upstream = g.data()[i * cols + c];
                    if upstream == 0.0 {
                        continue;
                    }
                    // d(out)/d(log density)
                    let scale = if log { upstream } else { upstream * out.data()[i * cols + c] };
                    if scale == 0.0 {
                        continue;
                    }
                    let x = tuples.row(layout.tuple_index(i, c));
                    for t in 0..r {
                        let d = x[t] - m[t];
                        gm[i * r + t] += scale * d / v[t];
                        gv[i * r + t] += scale * (d * d / (2.0 * v[t] * v[t]) - 0.5 / v[t]);
                    }
                }
            }
            vec![
                Some(Tensor::from_parts(vec![k, r], gm)),
                Some(Tensor::from_parts(vec![k, r], gv)),
            ]
        }),
    ))
}

/// Log density of every tuple under every diagonal Gaussian
/// `N(means[i], diag(vars[i]))`, as a `[k, N]` matrix.
pub fn gaussian_log_density<'t>(means: &Var<'t>, vars: &Var<'t>, tuples: &IntTuples) -> Result<Var<'t>> {
    density_op(means, vars, Points::from_tuples(tuples), false, true)
}

/// Log density of continuous point `i` (row of `points`, `[k, r]`) under
/// Gaussian `i` only; returns `[k, 1]`.
pub fn own_log_density<'t>(means: &Var<'t>, vars: &Var<'t>, points: &Tensor) -> Result<Var<'t>> {
    let rank = points.shape().get(1).copied().unwrap_or(0);
    let pts = Points {
        rank,
        data: points.data().to_vec(),
    };
    density_op(means, vars, pts, true, true)
}

/// Gaussian density `p_ij = N(tuple_j | means_i, diag(vars_i))` as a `[k, N]` matrix.
/// `vars` holds per-dimension variances.
pub fn proportions<'t>(means: &Var<'t>, vars: &Var<'t>, tuples: &IntTuples) -> Result<Var<'t>> {
    density_op(means, vars, Points::from_tuples(tuples), false, false)
}

/// Densities where continuous tuple `i` only sees its own block of
/// `N / k` consecutive integer tuples; returns `[k, N / k]`.
pub fn blocked_proportions<'t>(means: &Var<'t>, vars: &Var<'t>, tuples: &IntTuples) -> Result<Var<'t>> {
    density_op(means, vars, Points::from_tuples(tuples), true, false)
}

/// Masks duplicate columns of `p`, normalizes each row to sum to one and
/// returns `v'[j] = sum_i p'_ij v[i]`.
pub fn normalize_and_distribute<'t>(p: &Var<'t>, mask: &[bool], values: &Var<'t>) -> Result<Var<'t>> {
    let shape = p.shape();
    if shape.len() != 2 || shape[1] != mask.len() || values.shape() != [shape[0]] {
        return Err(Error::ShapeMismatch {
            op: "normalize_and_distribute",
            left: shape,
            right: values.shape(),
        });
    }
    let (k, n) = (shape[0], shape[1]);
    let mask: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let normalized = p.mul_row_const(&mask)?.row_normalize()?;
    values
        .reshape(vec![1, k])?
        .matmul(&normalized)?
        .reshape(vec![n])
}

/// `y[b, rows[j]] += values[j] * x[b, cols[j]]` for `x` of shape `[batch, in_len]`.
pub fn spmm_flat<'t>(
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: &Var<'t>,
    x: &Var<'t>,
    out_len: usize,
) -> Result<Var<'t>> {
    let xs = x.shape();
    if xs.len() != 2 || values.shape() != [rows.len()] || rows.len() != cols.len() {
        return Err(Error::ShapeMismatch {
            op: "spmm",
            left: values.shape(),
            right: xs,
        });
    }
    let (batch, in_len) = (xs[0], xs[1]);
    if let Some(j) = (0..rows.len()).find(|&j| rows[j] >= out_len || cols[j] >= in_len) {
        return Err(Error::IndexOutOfBounds {
            tuple: vec![rows[j], cols[j]],
            dims: vec![out_len, in_len],
        });
    }
    let mut y = vec![0.0; batch * out_len];
    values.with_value(|v| {
        x.with_value(|x| {
            let (v, x) = (v.data(), x.data());
            for b in 0..batch {
                let xb = &x[b * in_len..(b + 1) * in_len];
                let yb = &mut y[b * out_len..(b + 1) * out_len];
                for j in 0..rows.len() {
                    yb[rows[j]] += v[j] * xb[cols[j]];
                }
            }
        })
    });
    let value = Tensor::from_parts(vec![batch, out_len], y);
    Ok(values.tape().custom(
        &[*values, *x],
        value,
        Box::new(move |g, inputs, _| {
            let (v, x) = (inputs[0].data(), inputs[1].data());
            let g = g.data();
            let mut gv = vec![0.0; rows.len()];
            let mut gx = vec![0.0; batch * in_len];
            for b in 0..batch {
                let gb = &g[b * out_len..(b + 1) * out_len];
                let xb = &x[b * in_len..(b + 1) * in_len];
                let gxb = &mut gx[b * in_len..(b + 1) * in_len];
                for j in 0..rows.len() {
                    gv[j] += gb[rows[j]] * xb[cols[j]];
                    gxb[cols[j]] += v[j] * gb[rows[j]];
                }
            }
            vec![
                Some(Tensor::from_parts(vec![rows.len()], gv)),
                Some(Tensor::from_parts(vec![batch, in_len], gx)),
            ]
        }),
    ))
}

/// Tensor contraction `y[b..] = sum_a W[b.., a..] x[a..]`.
///
/// `x` is either shaped like the input dims or carries one extra leading
/// batch axis; the output mirrors that. No gradient flows to the indices.
pub fn sparse_mm<'t>(w: &SparseCoo<'t>, x: &Var<'t>) -> Result<Var<'t>> {
    let xs = x.shape();
    let batched = if xs == w.shape.input_dims {
        false
    } else if xs.len() == w.shape.input_dims.len() + 1 && xs[1..] == w.shape.input_dims[..] {
        true
    } else {
        return Err(Error::ShapeMismatch {
            op: "sparse_mm",
            left: w.shape.input_dims.clone(),
            right: xs,
        });
    };
    let batch = if batched { xs[0] } else { 1 };
    let x2 = x.reshape(vec![batch, w.shape.input_len()])?;
    let (rows, cols) = flatten_assemble(&w.indices, &w.shape, None);
    let y = spmm_flat(rows, cols, &w.values, &x2, w.shape.output_len())?;
    let mut out_shape = w.shape.output_dims.clone();
    if batched {
        out_shape.insert(0, batch);
    }
    y.reshape(out_shape)
}
