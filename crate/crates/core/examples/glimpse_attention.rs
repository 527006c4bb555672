//! Classify patches placed at random on a noisy canvas by looking through
//! one learned glimpse. Prints test accuracy and where the glimpse box sits.
//!
//! Usage: `cargo run --release --example glimpse_attention [batches] [seed]`

use sparse_hyper::autodiff::{Adam, AdamConfig, ParamStore, Tape};
use sparse_hyper::glimpse::{AttentionConfig, AttentionModel, PatchDataset, PatchTaskConfig};
use sparse_hyper::{rng, Result};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let batches: usize = args.next().map_or(5000, |s| s.parse().expect("batches"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let task = PatchTaskConfig::default();
    let train = PatchDataset::generate(seed, 1, 20_000, task)?;
    let test = PatchDataset::generate(seed, 2, 1000, task)?;

    let cfg = AttentionConfig::default();
    let mut store = ParamStore::new();
    let model = AttentionModel::new(&mut store, &cfg, &mut rng::stream(seed, 3))?;
    let mut adam = Adam::new(AdamConfig::with_lr(1e-3));
    let mut draws = rng::stream(seed, 4);
    let batch = 32;

    for step in 0..=batches {
        if step % 500 == 0 {
            let acc = model.accuracy(&store, &test.images, &test.labels)?;
            let (_, boxes) = model.forward_eval(&store, &test.slice(0, 1).0)?;
            let b = boxes.data();
            println!(
                "batch {step:>5}  test accuracy {:.1}%  first box rows {:.1}..{:.1} cols {:.1}..{:.1}",
                100.0 * acc,
                b[0],
                b[2],
                b[1],
                b[3]
            );
        }
        let start = (step * batch) % (train.len() - batch);
        let (x, y) = train.slice(start, batch);
        let tape = Tape::new();
        let out = model.forward(&tape, &store, &x, &mut draws)?;
        let grads = tape.backward(out.logits.cross_entropy(&y)?)?;
        adam.step(&mut store, &grads)?;
    }
    Ok(())
}
