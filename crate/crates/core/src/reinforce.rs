//! Score-function baseline for sparse layers.
//!
//! Uses the same `(D, sigma, v)` parametrization as [`SparseLayer`], but
//! each step draws exactly one continuous point per tuple, rounds it, and
//! builds a hard sparse matrix. The tuple means and spreads are trained
//! with the REINFORCE estimator `(L - b) * grad log N(z | d, sigma)`.

use crate::autodiff::{Adam, Gradients, ParamStore, Tape, Var};
use crate::error::Result;
use crate::sparse::{own_log_density, round_index, sparse_mm, IntTuples, SparseCoo, SparseLayer};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforceConfig {
    /// Subtract a moving average of past losses from the reward.
    pub use_baseline: bool,
    pub momentum: f64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self {
            use_baseline: true,
            momentum: 0.9,
        }
    }
}

/// One draw: continuous points `z` (`[k, r]`) and their clamped roundings.
#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceSample {
    pub points: Tensor,
    pub tuples: IntTuples,
}

#[derive(Debug, Clone)]
pub struct ReinforceLayer {
    pub layer: SparseLayer,
    pub config: ReinforceConfig,
    /// Moving-average loss; `None` until the first step.
    pub baseline: Option<f64>,
}

/// `advantage * sum_i log N(z_i | d_i, sigma_i)`. Its gradient is the
/// score-function estimate for a single draw with reward `advantage`.
pub fn score_surrogate<'t>(means: &Var<'t>, vars: &Var<'t>, points: &Tensor, advantage: f64) -> Result<Var<'t>> {
    Ok(own_log_density(means, vars, points)?.sum().mul_scalar(advantage))
}

impl ReinforceLayer {
    pub fn new(layer: SparseLayer, config: ReinforceConfig) -> Self {
        Self {
            layer,
            config,
            baseline: None,
        }
    }

    /// `z_i ~ N(d_i, diag(sigma_i))`, rounded and clamped into the index bounds.
    pub fn sample(&self, store: &ParamStore, rng: &mut impl Rng) -> ReinforceSample {
        let dims = self.layer.shape.dims();
        let r = dims.len();
        let means = self.layer.continuous_means(store);
        let vars = self.layer.variances(store);
        let points: Vec<f64> = means
            .data()
            .iter()
            .zip(vars.data())
            .map(|(&m, &v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut tuples = IntTuples::with_capacity(r, self.layer.k);
        for z in points.chunks(r) {
            let t: Vec<usize> = z.iter().zip(&dims).map(|(&x, &h)| round_index(x, h)).collect();
            tuples.push(&t);
        }
        ReinforceSample {
            points: Tensor::from_parts(vec![self.layer.k, r], points),
            tuples,
        }
    }

    /// Reward passed to the estimator for loss `loss`.
    pub fn advantage(&self, loss: f64) -> f64 {
        if !self.config.use_baseline {
            return loss;
        }
        loss - self.baseline.unwrap_or(loss)
    }

    fn update_baseline(&mut self, loss: f64) {
        if self.config.use_baseline {
            let m = self.config.momentum;
            self.baseline = Some(self.baseline.map_or(loss, |b| m * b + (1.0 - m) * loss));
        }
    }

    /// Mse loss of the hard matrix on `(x, target)` and the gradient estimate.
    /// Values get their exact gradient; means and spreads the score-function one.
    pub fn gradients(
        &mut self,
        store: &ParamStore,
        sample: &ReinforceSample,
        x: &Tensor,
        target: &Tensor,
    ) -> Result<(f64, Gradients)> {
        let tape = Tape::new();
        let set = self.layer.tuples(&tape, store);
        let w = SparseCoo::new(sample.tuples.clone(), set.values, self.layer.shape.clone())?;
        let y = sparse_mm(&w, &tape.constant(x.clone()))?;
        let loss = y.mse_loss(&tape.constant(target.clone()))?;
        let value = loss.item();
        let advantage = self.advantage(value);
        let surrogate = score_surrogate(
            &set.means(&self.layer.shape)?,
            &set.variances(&self.layer.shape)?,
            &sample.points,
            advantage,
        )?;
        let grads = tape.backward(loss.add(&surrogate)?)?;
        self.update_baseline(value);
        Ok((value, grads))
    }

    /// Sample, estimate and apply one Adam update. Returns the batch loss.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        adam: &mut Adam,
        x: &Tensor,
        target: &Tensor,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let sample = self.sample(store, rng);
        let (loss, grads) = self.gradients(store, &sample, x, target)?;
        adam.step(store, &grads)?;
        Ok(loss)
    }

    pub fn forward_eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.layer.forward_eval(store, x)
    }
}
