use crate::autodiff::Var;
use crate::error::{config_err, Error, Result};
use crate::sparse::{
    blocked_proportions, expand_sigma, flatten_assemble, mask_duplicates_blocked, sample_tuples, spmm_flat,
    HyperlayerShape, IntTuples, SamplingConfig,
};
use crate::tensor::Tensor;
use rand::Rng;

/// Shape and sampling settings shared by all glimpses of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseSpec {
    pub count: usize,
    pub size: usize,
    pub height: usize,
    pub width: usize,
    pub sampling: SamplingConfig,
    pub tau: f64,
}

/// Integer samples for every grid point of a batch, `s` consecutive rows per point.
#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseSample {
    pub tuples: IntTuples,
    pub mask: Vec<bool>,
    pub per_point: usize,
}

impl GlimpseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.size == 0 {
            return Err(config_err("need at least one glimpse of size >= 1"));
        }
        if self.size > self.height.min(self.width) {
            return Err(config_err(format!(
                "glimpse size {} exceeds image {}x{}",
                self.size, self.height, self.width
            )));
        }
        if !(self.tau > 0.0) {
            return Err(config_err("tau must be positive"));
        }
        self.sampling.validate(&self.image_dims())
    }

    pub fn image_dims(&self) -> Vec<usize> {
        vec![self.height, self.width]
    }

    /// Pixels per glimpse, `k^2`.
    pub fn points(&self) -> usize {
        self.size * self.size
    }

    /// The weight tensor of one instance: `(g, k, k)` outputs over `(h, w)` inputs.
    pub fn shape(&self) -> HyperlayerShape {
        HyperlayerShape {
            input_dims: self.image_dims(),
            output_dims: vec![self.count, self.size, self.size],
        }
    }

    /// Draws corners, local and global samples around every continuous
    /// grid point in `means` (`[b g k^2, 2]`).
    pub fn sample(&self, means: &Tensor, rng: &mut impl Rng) -> Result<GlimpseSample> {
        let tuples = sample_tuples(means, &self.image_dims(), &self.sampling, rng);
        let per_point = self.sampling.per_tuple(2);
        let mask = mask_duplicates_blocked(&tuples, per_point)?;
        Ok(GlimpseSample { tuples, mask, per_point })
    }
}

/// Sampled glimpses `[b, g k^2]` of flattened images `x` (`[b, h w]`).
///
/// `means` holds the continuous grid points of every glimpse of every
/// instance, `sigmas_raw` and `values` one entry per glimpse.
pub fn glimpse_forward<'t>(
    spec: &GlimpseSpec,
    means: &Var<'t>,
    sigmas_raw: &Var<'t>,
    values: &Var<'t>,
    x: &Var<'t>,
    sample: &GlimpseSample,
) -> Result<Var<'t>> {
    let xs = x.shape();
    let pixels = spec.height * spec.width;
    let per_instance = spec.count * spec.points();
    if xs.len() != 2 || xs[1] != pixels || means.shape() != [xs[0] * per_instance, 2] {
        return Err(Error::ShapeMismatch {
            op: "glimpse_forward",
            left: means.shape(),
            right: xs,
        });
    }
    let batch = xs[0];
    let m = batch * per_instance;
    let s = sample.per_point;
    if sample.tuples.len() != m * s {
        return Err(config_err("glimpse sample does not match the grid points"));
    }
    let glimpse_of = |row: usize| (row / spec.points()) % spec.count;

    let variances = expand_sigma(sigmas_raw, &spec.image_dims(), spec.tau)?;
    let var_idx: Vec<usize> = (0..m).flat_map(|row| [2 * glimpse_of(row), 2 * glimpse_of(row) + 1]).collect();
    let variances = variances.gather(&var_idx, vec![m, 2])?;

    let mask: Vec<f64> = sample.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let p = blocked_proportions(means, &variances, &sample.tuples)?
        .mul_const(&Tensor::from_parts(vec![m, s], mask))?
        .row_normalize()?;
    let val_idx: Vec<usize> = (0..m * s).map(|j| glimpse_of(j / s)).collect();
    let spread = values.gather(&val_idx, vec![m, s])?;
    let v = p.mul(&spread)?.reshape(vec![m * s])?;

    // full (glimpse, i, j, row, col) tuples, one weight tensor per instance
    let mut full = IntTuples::with_capacity(5, m * s);
    let mut batch_index = Vec::with_capacity(m * s);
    for (j, t) in sample.tuples.rows().enumerate() {
        let row = j / s;
        let p = row % spec.points();
        full.push(&[glimpse_of(row), p / spec.size, p % spec.size, t[0], t[1]]);
        batch_index.push(row / per_instance);
    }
    let (rows, cols) = flatten_assemble(&full, &spec.shape(), Some(&batch_index));
    let flat = x.reshape(vec![1, batch * pixels])?;
    spmm_flat(rows, cols, &v, &flat, m)?.reshape(vec![batch, per_instance])
}

/// Deterministic glimpses: every grid point reads the pixel at its rounded
/// position, scaled by the glimpse value.
pub fn glimpse_eval(spec: &GlimpseSpec, means: &Tensor, values: &Tensor, x: &Tensor) -> Result<Tensor> {
    let pixels = spec.height * spec.width;
    let per_instance = spec.count * spec.points();
    let batch = x.len() / pixels;
    if means.shape() != [batch * per_instance, 2] || values.len() != spec.count {
        return Err(Error::ShapeMismatch {
            op: "glimpse_eval",
            left: means.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    let round = |v: f64, h: usize| (v.round().max(0.0) as usize).min(h - 1);
    let out = means
        .data()
        .chunks(2)
        .enumerate()
        .map(|(row, d)| {
            let b = row / per_instance;
            let g = (row / spec.points()) % spec.count;
            let (r, c) = (round(d[0], spec.height), round(d[1], spec.width));
            values.data()[g] * x.data()[b * pixels + r * spec.width + c]
        })
        .collect();
    Ok(Tensor::from_parts(vec![batch, per_instance], out))
}
