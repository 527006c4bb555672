use super::halfperm::PermTables;
use super::quicksort::{intermediate_loss, quicksort_forward, SortConfig};
use crate::autodiff::{Mlp, ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::Rng as _;

/// One list to sort: hidden values and their noisy `[n, m]` encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct SortInstance {
    pub values: Vec<f64>,
    pub items: Tensor,
}

impl SortInstance {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Items rearranged into ascending order of their hidden values.
    pub fn sorted_items(&self) -> Tensor {
        let m = self.items.shape()[1];
        let data = argsort(&self.values)
            .into_iter()
            .flat_map(|i| self.items.data()[i * m..(i + 1) * m].iter().copied())
            .collect();
        Tensor::from_parts(vec![self.n(), m], data)
    }
}

/// Stable ascending argsort; equal entries keep index order.
pub fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// `count` instances of `n` items with `m` features each. A feature is the
/// hidden value plus uniform noise in `[-noise, noise]`, clamped to `[0, 1]`.
pub fn synthetic_sort_task(rng: &mut Rng, count: usize, n: usize, m: usize, noise: f64) -> Vec<SortInstance> {
    (0..count)
        .map(|_| {
            let values = loop {
                let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                if s.windows(2).all(|w| w[0] < w[1]) {
                    break v;
                }
            };
            let data = values
                .iter()
                .flat_map(|&v| {
                    (0..m)
                        .map(|_| {
                            let e = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                            (v + e).clamp(0.0, 1.0)
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            SortInstance {
                items: Tensor::from_parts(vec![n, m], data),
                values,
            }
        })
        .collect()
}

/// Maps each item encoding to a scalar sort key.
#[derive(Debug, Clone)]
pub struct KeyNet {
    pub mlp: Mlp,
}

impl KeyNet {
    pub fn new(store: &mut ParamStore, features: usize, hidden: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            mlp: Mlp::new(store, "keys", &[features, hidden, 1], rng),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.mlp.params().collect()
    }

    /// `[n, m]` items to `[n, 1]` keys.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, items: &Var<'t>) -> Result<Var<'t>> {
        self.mlp.forward(tape, store, items)
    }

    pub fn keys(&self, store: &ParamStore, items: &Tensor) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let x = tape.constant(items.clone());
        Ok(self.forward(&tape, store, &x)?.value().into_data())
    }

    /// Mean intermediate loss over a batch, on one tape.
    pub fn batch_loss<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        batch: &[SortInstance],
        cfg: &SortConfig,
        tables: &mut PermTables,
        rng: &mut Rng,
    ) -> Result<Var<'t>> {
        let mut total: Option<Var<'t>> = None;
        for inst in batch {
            let items = tape.constant(inst.items.clone());
            let keys = self.forward(tape, store, &items)?;
            let trace = quicksort_forward(&items, &keys, cfg, tables, rng)?;
            let l = intermediate_loss(&trace, &inst.sorted_items())?;
            total = Some(match total {
                Some(acc) => acc.add(&l)?,
                None => l,
            });
        }
        Ok(total.expect("non-empty batch").mul_scalar(1.0 / batch.len() as f64))
    }
}

/// Fraction of instances whose key order differs from the true order.
pub fn evaluate_permutation_error(net: &KeyNet, store: &ParamStore, dataset: &[SortInstance]) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for inst in dataset {
        let keys = net.keys(store, &inst.items)?;
        if argsort(&keys) != argsort(&inst.values) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / dataset.len() as f64)
}
