//! The same identity task trained with the score-function estimator instead
//! of the sparse layer's gradient. Prints both side by side.
//!
//! Usage: `cargo run --release --example reinforce_identity [n] [batches]`

use rand::Rng;
use rand_distr::StandardNormal;
use sparse_hyper::autodiff::{Adam, AdamConfig, ParamStore};
use sparse_hyper::reinforce::{ReinforceConfig, ReinforceLayer};
use sparse_hyper::sparse::{HyperlayerShape, SamplingConfig, SparseLayer};
use sparse_hyper::{rng, Result, Tensor};

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).expect("rows * cols values")
}

fn mse(y: &Tensor, x: &Tensor) -> f64 {
    y.zip_map(x, |a, b| (a - b) * (a - b)).expect("same shape").sum() / x.len() as f64
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(8, |s| s.parse().expect("n"));
    let batches: usize = args.next().map_or(10_000, |s| s.parse().expect("batches"));
    let shape = HyperlayerShape::square(n)?;
    let test = gaussian(&mut rng::stream(0, 9), 1000, n);

    let mut sparse_store = ParamStore::new();
    let sparse = SparseLayer::with_unit_values(&mut sparse_store, "w", shape.clone(), n, 0.1, &mut rng::stream(0, 1))?;
    let sampling = SamplingConfig::new(2, 2, vec![3, 3]);
    let mut sparse_adam = Adam::new(AdamConfig::with_lr(0.005));

    let mut rf_store = ParamStore::new();
    let layer = SparseLayer::with_unit_values(&mut rf_store, "w", shape, n, 0.1, &mut rng::stream(0, 1))?;
    let mut rf = ReinforceLayer::new(layer, ReinforceConfig::default());
    let mut rf_adam = Adam::new(AdamConfig::with_lr(0.005));

    let (mut data, mut draws) = (rng::stream(0, 2), rng::stream(0, 3));
    println!("{:>6}  {:>12}  {:>12}", "batch", "sparse mse", "reinforce mse");
    for step in 0..=batches {
        if step % (batches / 10).max(1) == 0 {
            let a = mse(&sparse.forward_eval(&sparse_store, &test)?, &test);
            let b = mse(&rf.forward_eval(&rf_store, &test)?, &test);
            println!("{step:>6}  {a:>12.6}  {b:>12.6}");
        }
        let x = gaussian(&mut data, 64, n);
        let sample = sparse.sample(&sparse_store, &sampling, &mut draws)?;
        let target = x.clone();
        let (_, grads) =
            sparse.gradients(&sparse_store, &sample, &x, 1, |tape, y| y.mse_loss(&tape.constant(target.clone())))?;
        sparse_adam.step(&mut sparse_store, &grads)?;
        rf.step(&mut rf_store, &mut rf_adam, &x, &x, &mut draws)?;
    }
    Ok(())
}
