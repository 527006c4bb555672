//! Train a key network through the relaxed quicksort, then sort a fresh
//! list with the learned keys.
//!
//! Usage: `cargo run --release --example differentiable_sort [n] [batches]`

use sparse_hyper::autodiff::{Adam, AdamConfig, ParamStore, Tape};
use sparse_hyper::sort::{
    argsort, evaluate_permutation_error, synthetic_sort_task, KeyNet, PermTables, SortConfig,
};
use sparse_hyper::{rng, Result};

const FEATURES: usize = 8;
const NOISE: f64 = 0.05;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(4, |s| s.parse().expect("n"));
    let batches: usize = args.next().map_or(2000, |s| s.parse().expect("batches"));

    let mut store = ParamStore::new();
    let net = KeyNet::new(&mut store, FEATURES, 32, &mut rng::stream(0, 1));
    let mut adam = Adam::new(AdamConfig::with_lr(1e-3));
    let cfg = SortConfig { samples: n, temperature: 10.0 };
    let mut tables = PermTables::new(0, 50_000);
    let (mut data, mut draws) = (rng::stream(0, 2), rng::stream(0, 3));
    let test = synthetic_sort_task(&mut rng::stream(0, 4), 500, n, FEATURES, NOISE);

    for step in 0..=batches {
        if step % (batches / 5).max(1) == 0 {
            let err = evaluate_permutation_error(&net, &store, &test)?;
            println!("batch {step:>5}  wrong permutations {:.1}%", 100.0 * err);
        }
        let batch = synthetic_sort_task(&mut data, 64, n, FEATURES, NOISE);
        let tape = Tape::new();
        let loss = net.batch_loss(&tape, &store, &batch, &cfg, &mut tables, &mut draws)?;
        let grads = tape.backward(loss)?;
        adam.step(&mut store, &grads)?;
    }

    let list = &synthetic_sort_task(&mut rng::stream(1, 0), 1, n, FEATURES, NOISE)[0];
    let keys = net.keys(&store, &list.items)?;
    println!("hidden values {:.3?}", list.values);
    println!("true order    {:?}", argsort(&list.values));
    println!("learned order {:?}", argsort(&keys));
    Ok(())
}
