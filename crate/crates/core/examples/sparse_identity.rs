//! Learn the n x n identity matrix with a sparse layer of n index tuples.
//!
//! Usage: `cargo run --release --example sparse_identity [n] [seed]`

use rand::Rng;
use rand_distr::StandardNormal;
use sparse_hyper::autodiff::{Adam, AdamConfig, ParamStore};
use sparse_hyper::sparse::{HyperlayerShape, SamplingConfig, SparseLayer};
use sparse_hyper::{rng, Result, Tensor};

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).expect("rows * cols values")
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(8, |s| s.parse().expect("n"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let iterations = 10_000;

    let mut store = ParamStore::new();
    let shape = HyperlayerShape::square(n)?;
    let layer = SparseLayer::with_unit_values(&mut store, "w", shape, n, 0.1, &mut rng::stream(seed, 1))?;
    let sampling = SamplingConfig::new(2, 2, vec![3, 3]);
    let mut adam = Adam::new(AdamConfig::with_lr(0.005));
    let (mut data, mut draws) = (rng::stream(seed, 2), rng::stream(seed, 3));
    let test = gaussian(&mut rng::stream(seed, 4), 1000, n);

    for step in 0..=iterations {
        if step % 1000 == 0 {
            let y = layer.forward_eval(&store, &test)?;
            let mse = y.zip_map(&test, |a, b| (a - b) * (a - b))?.sum() / test.len() as f64;
            println!("step {step:>5}  eval mse {mse:.6}");
            if mse < 1e-6 {
                break;
            }
        }
        let x = gaussian(&mut data, 64, n);
        let sample = layer.sample(&store, &sampling, &mut draws)?;
        let target = x.clone();
        let (_, grads) = layer.gradients(&store, &sample, &x, 1, |tape, y| y.mse_loss(&tape.constant(target.clone())))?;
        adam.step(&mut store, &grads)?;
    }
    println!("learned index tuples:");
    for t in layer.rounded_tuples(&store).rows() {
        print!("{t:?} ");
    }
    println!();
    Ok(())
}
