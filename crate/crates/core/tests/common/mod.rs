#![allow(dead_code)]

pub mod checks;
pub mod grad_suite;

use rand::Rng;
use sparse_hyper::autodiff::{Tape, Var};
use sparse_hyper::{Result, Tensor};

pub const STEP: f64 = 1e-5;

/// Worst gradient mismatch found by [`check`].
#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1)` over all elements.
    pub max_elem_rel: f64,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)` over all inputs.
    pub total_rel: f64,
}

impl GradReport {
    pub fn passes(&self) -> bool {
        self.max_elem_rel < 1e-4 && self.total_rel < 1e-3
    }
}

/// Central-difference check of `f` (which must return a scalar) at `inputs`.
pub fn check<F>(inputs: &[Tensor], f: F) -> GradReport
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars).expect("forward");
    let grads = tape.backward(out).expect("backward");
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |inputs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        f(&tape, &vars).expect("forward").item()
    };

    let (mut diff_sq, mut a_sq, mut n_sq, mut worst) = (0.0, 0.0, 0.0, 0.0f64);
    let mut work = inputs.to_vec();
    for (which, grad) in analytic.iter().enumerate() {
        for i in 0..inputs[which].len() {
            let orig = inputs[which].data()[i];
            work[which].data_mut()[i] = orig + STEP;
            let up = eval(&work);
            work[which].data_mut()[i] = orig - STEP;
            let down = eval(&work);
            work[which].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = grad.data()[i];
            diff_sq += (a - numeric).powi(2);
            a_sq += a * a;
            n_sq += numeric * numeric;
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0));
        }
    }
    GradReport {
        max_elem_rel: worst,
        total_rel: diff_sq.sqrt() / a_sq.sqrt().max(n_sq.sqrt()).max(1e-8),
    }
}

pub fn normal_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()).unwrap()
}

pub fn uniform_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Fixed random weights so a non-scalar output can be reduced to a scalar
/// with a non-trivial gradient.
pub fn weighted_sum<'t>(y: &Var<'t>, seed: u64) -> Var<'t> {
    let mut r = sparse_hyper::rng::stream(seed, 99);
    let w = uniform_tensor(&y.shape(), -1.0, 1.0, &mut r);
    y.mul_const(&w).unwrap().sum()
}
