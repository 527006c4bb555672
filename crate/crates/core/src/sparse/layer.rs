use super::ops::{normalize_and_distribute, proportions, sparse_mm, spmm_flat, SparseCoo};
use super::sampling::{round_index, sample_tuples};
use super::{flatten_assemble, mask_duplicates, HyperlayerShape, IntTuples, SamplingConfig};
use crate::autodiff::{Gradients, ParamId, ParamStore, Tape, Var};
use crate::error::{config_err, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

fn dims_f64(dims: &[usize]) -> Vec<f64> {
    dims.iter().map(|&h| h as f64).collect()
}

/// `sigmoid(raw) * h` for a `[k, r]` matrix of raw tuples.
pub fn map_tuples<'t>(raw: &Var<'t>, dims: &[usize]) -> Result<Var<'t>> {
    raw.sigmoid().mul_row_const(&dims_f64(dims))
}

/// `[k]` raw spreads to `[k, r]` per-dimension variances
/// `softplus(raw + 2) * h * 0.1 + tau`.
pub fn expand_sigma<'t>(raw: &Var<'t>, dims: &[usize], tau: f64) -> Result<Var<'t>> {
    Ok(raw
        .add_scalar(2.0)
        .softplus()
        .mul_scalar(0.1)
        .outer_const(&dims_f64(dims))?
        .add_scalar(tau))
}

/// Raw sparse parameters `(D, sigma, v)` of one layer, living on a tape.
/// They may be free parameters or the output of a source network.
#[derive(Debug, Clone, Copy)]
pub struct ContinuousTupleSet<'t> {
    pub means_raw: Var<'t>,
    pub sigmas_raw: Var<'t>,
    pub values: Var<'t>,
    pub tau: f64,
}

/// One draw of integer tuples `D'` together with its duplicate mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSample {
    pub tuples: IntTuples,
    pub mask: Vec<bool>,
}

impl LayerSample {
    pub fn draw(means: &Tensor, dims: &[usize], cfg: &SamplingConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate(dims)?;
        let tuples = sample_tuples(means, dims, cfg, rng);
        let mask = mask_duplicates(&tuples)?;
        Ok(Self { tuples, mask })
    }
}

impl<'t> ContinuousTupleSet<'t> {
    pub fn k(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn means(&self, shape: &HyperlayerShape) -> Result<Var<'t>> {
        map_tuples(&self.means_raw, &shape.dims())
    }

    pub fn variances(&self, shape: &HyperlayerShape) -> Result<Var<'t>> {
        expand_sigma(&self.sigmas_raw, &shape.dims(), self.tau)
    }

    pub fn sample(&self, shape: &HyperlayerShape, cfg: &SamplingConfig, rng: &mut impl Rng) -> Result<LayerSample> {
        let means = self.means(shape)?.value();
        LayerSample::draw(&means, &shape.dims(), cfg, rng)
    }

    /// Distributed values `v'` over the sampled tuples.
    pub fn distributed_values(&self, shape: &HyperlayerShape, sample: &LayerSample) -> Result<Var<'t>> {
        let p = proportions(&self.means(shape)?, &self.variances(shape)?, &sample.tuples)?;
        normalize_and_distribute(&p, &sample.mask, &self.values)
    }

    pub fn sparse_matrix(&self, shape: &HyperlayerShape, sample: &LayerSample) -> Result<SparseCoo<'t>> {
        let values = self.distributed_values(shape, sample)?;
        SparseCoo::new(sample.tuples.clone(), values, shape.clone())
    }

    /// Sampled forward pass: builds `W` from `sample` and contracts it with `x`.
    pub fn forward(&self, shape: &HyperlayerShape, sample: &LayerSample, x: &Var<'t>) -> Result<Var<'t>> {
        sparse_mm(&self.sparse_matrix(shape, sample)?, x)
    }
}

/// Plain-value `v'` contributed by the continuous tuples in `rows` only.
pub fn distribute_values(
    means_raw: &Tensor,
    sigmas_raw: &Tensor,
    values: &Tensor,
    tau: f64,
    shape: &HyperlayerShape,
    sample: &LayerSample,
    rows: &[usize],
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(vec![0.0; sample.tuples.len()]);
    }
    let r = shape.rank();
    let tape = Tape::new();
    let pick = |t: &Tensor, width: usize| {
        let data = rows
            .iter()
            .flat_map(|&i| t.data()[i * width..(i + 1) * width].iter().copied())
            .collect();
        let shape = if width == 1 { vec![rows.len()] } else { vec![rows.len(), width] };
        tape.constant(Tensor::from_parts(shape, data))
    };
    let set = ContinuousTupleSet {
        means_raw: pick(means_raw, r),
        sigmas_raw: pick(sigmas_raw, 1),
        values: pick(values, 1),
        tau,
    };
    Ok(set.distributed_values(shape, sample)?.value().into_data())
}

/// A sparse layer whose parameters are free (no source network).
#[derive(Debug, Clone)]
pub struct SparseLayer {
    pub shape: HyperlayerShape,
    pub k: usize,
    pub means: ParamId,
    pub sigmas: ParamId,
    pub values: ParamId,
    pub tau: f64,
    /// When false, `values` stays constant and receives no gradient.
    pub learn_values: bool,
}

impl SparseLayer {
    /// `k` continuous tuples with standard-normal raw parameters.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        shape: HyperlayerShape,
        k: usize,
        tau: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if k == 0 {
            return Err(config_err("sparse layer needs k >= 1"));
        }
        if !(tau > 0.0) {
            return Err(config_err("tau must be positive"));
        }
        let r = shape.rank();
        let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let means = store.add(format!("{name}.means"), Tensor::from_parts(vec![k, r], normal(k * r)));
        let sigmas = store.add(format!("{name}.sigmas"), Tensor::from_parts(vec![k], normal(k)));
        let values = store.add(format!("{name}.values"), Tensor::from_parts(vec![k], normal(k)));
        Ok(Self {
            shape,
            k,
            means,
            sigmas,
            values,
            tau,
            learn_values: true,
        })
    }

    /// Like [`SparseLayer::new`], but every value is fixed at 1 and only the
    /// tuple positions and spreads are learned.
    pub fn with_unit_values(
        store: &mut ParamStore,
        name: &str,
        shape: HyperlayerShape,
        k: usize,
        tau: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut layer = Self::new(store, name, shape, k, tau, rng)?;
        store.get_mut(layer.values).data_mut().fill(1.0);
        layer.learn_values = false;
        Ok(layer)
    }

    pub fn params(&self) -> Vec<ParamId> {
        if self.learn_values {
            vec![self.means, self.sigmas, self.values]
        } else {
            vec![self.means, self.sigmas]
        }
    }

    pub fn tuples<'t>(&self, tape: &'t Tape, store: &ParamStore) -> ContinuousTupleSet<'t> {
        ContinuousTupleSet {
            means_raw: tape.param(store, self.means),
            sigmas_raw: tape.param(store, self.sigmas),
            values: if self.learn_values {
                tape.param(store, self.values)
            } else {
                tape.constant(store.get(self.values).clone())
            },
            tau: self.tau,
        }
    }

    /// Current continuous tuples `d_i` as a `[k, r]` tensor.
    pub fn continuous_means(&self, store: &ParamStore) -> Tensor {
        let tape = Tape::new();
        let raw = tape.constant(store.get(self.means).clone());
        map_tuples(&raw, &self.shape.dims()).expect("shape checked at construction").value()
    }

    pub fn variances(&self, store: &ParamStore) -> Tensor {
        let tape = Tape::new();
        let raw = tape.constant(store.get(self.sigmas).clone());
        expand_sigma(&raw, &self.shape.dims(), self.tau)
            .expect("shape checked at construction")
            .value()
    }

    pub fn sample(&self, store: &ParamStore, cfg: &SamplingConfig, rng: &mut impl Rng) -> Result<LayerSample> {
        LayerSample::draw(&self.continuous_means(store), &self.shape.dims(), cfg, rng)
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, sample: &LayerSample, x: &Var<'t>) -> Result<Var<'t>> {
        self.tuples(tape, store).forward(&self.shape, sample, x)
    }

    /// Integer tuples `round(d_i)` with the raw values, duplicates summed.
    pub fn rounded_tuples(&self, store: &ParamStore) -> IntTuples {
        let dims = self.shape.dims();
        let means = self.continuous_means(store);
        let mut out = IntTuples::with_capacity(dims.len(), self.k);
        for d in means.data().chunks(dims.len()) {
            let t: Vec<usize> = d.iter().zip(&dims).map(|(&x, &h)| round_index(x, h)).collect();
            out.push(&t);
        }
        out
    }

    /// Deterministic evaluation: no sampling, tuples rounded to the nearest integers.
    pub fn forward_eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let values = tape.constant(store.get(self.values).clone());
        let w = SparseCoo::new(self.rounded_tuples(store), values, self.shape.clone())?;
        let x = tape.constant(x.clone());
        Ok(sparse_mm(&w, &x)?.value())
    }

    /// Forward and backward through `loss(y)` with a fixed sample.
    ///
    /// With `chunks > 1` the continuous tuples are split into that many
    /// groups; each group gets its own forward and backward pass in which
    /// the other groups' contributions to `v'` are constants, and the
    /// parameter gradients are summed.
    pub fn gradients<F>(
        &self,
        store: &ParamStore,
        sample: &LayerSample,
        x: &Tensor,
        chunks: usize,
        loss: F,
    ) -> Result<(f64, Gradients)>
    where
        F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
    {
        if chunks <= 1 {
            let tape = Tape::new();
            let xv = tape.constant(x.clone());
            let y = self.forward(&tape, store, sample, &xv)?;
            let l = loss(&tape, y)?;
            return Ok((l.item(), tape.backward(l)?));
        }
        let chunks = chunks.min(self.k);
        let r = self.shape.rank();
        let mut total = Gradients::default();
        let mut loss_value = 0.0;
        let (rows, cols) = flatten_assemble(&sample.tuples, &self.shape, None);
        for c in 0..chunks {
            let lo = c * self.k / chunks;
            let hi = (c + 1) * self.k / chunks;
            let inside: Vec<usize> = (lo..hi).collect();
            let outside: Vec<usize> = (0..self.k).filter(|i| !(lo..hi).contains(i)).collect();
            let rest = distribute_values(
                store.get(self.means),
                store.get(self.sigmas),
                store.get(self.values),
                self.tau,
                &self.shape,
                sample,
                &outside,
            )?;

            let tape = Tape::new();
            let full = self.tuples(&tape, store);
            let mean_idx: Vec<usize> = inside.iter().flat_map(|&i| i * r..(i + 1) * r).collect();
            let set = ContinuousTupleSet {
                means_raw: full.means_raw.gather(&mean_idx, vec![inside.len(), r])?,
                sigmas_raw: full.sigmas_raw.gather(&inside, vec![inside.len()])?,
                values: full.values.gather(&inside, vec![inside.len()])?,
                tau: self.tau,
            };
            let v = set
                .distributed_values(&self.shape, sample)?
                .add_const(&Tensor::vector(rest))?;
            let batch = x.len() / self.shape.input_len();
            let xv = tape.constant(x.clone().reshape(vec![batch, self.shape.input_len()])?);
            let y = spmm_flat(rows.clone(), cols.clone(), &v, &xv, self.shape.output_len())?;
            let mut out_shape = self.shape.output_dims.clone();
            if x.shape() != self.shape.input_dims.as_slice() {
                out_shape.insert(0, batch);
            }
            let l = loss(&tape, y.reshape(out_shape)?)?;
            loss_value = l.item();
            total.accumulate(&tape.backward(l)?)?;
        }
        Ok((loss_value, total))
    }
}
