//! Fit `y = 3x - 1` with one linear unit to show the tape, parameter store
//! and optimizer working together.

use rand::Rng;
use sparse_hyper::autodiff::{Adam, AdamConfig, Linear, ParamStore, Tape};
use sparse_hyper::{rng, Result, Tensor};

fn main() -> Result<()> {
    let mut store = ParamStore::new();
    let mut init = rng::stream(0, 1);
    let unit = Linear::new(&mut store, "unit", 1, 1, &mut init);
    let mut adam = Adam::new(AdamConfig::with_lr(0.05));
    let mut data = rng::stream(0, 2);

    for step in 0..=500 {
        let xs: Vec<f64> = (0..32).map(|_| data.gen_range(-1.0..1.0)).collect();
        let ys = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let tape = Tape::new();
        let x = tape.constant(Tensor::matrix(32, 1, xs)?);
        let loss = unit.forward(&tape, &store, &x)?.mse_loss(&tape.constant(Tensor::matrix(32, 1, ys)?))?;
        let grads = tape.backward(loss)?;
        adam.step(&mut store, &grads)?;
        if step % 100 == 0 {
            println!("step {step:>3}  loss {:.6}", loss.item());
        }
    }
    println!(
        "weight {:.4}  bias {:.4}",
        store.get(unit.weight).item(),
        store.get(unit.bias).item()
    );
    Ok(())
}
