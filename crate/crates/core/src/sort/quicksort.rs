use super::halfperm::{sample_half_perms, PermTables, RelaxedHalfPerm};
use super::median::relax_logits;
use super::DEFAULT_TEMPERATURE;
use crate::autodiff::Var;
use crate::error::{config_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Settings for one relaxed quicksort pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortConfig {
    /// Random half-permutations sampled per stage, besides `round(o')`.
    pub samples: usize,
    /// Sigmoid sharpness `C`.
    pub temperature: f64,
}

impl Default for SortConfig {
    fn default() -> Self {
        Self {
            samples: 4,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl SortConfig {
    /// No random samples: every stage is the hard permutation of `round(o')`.
    pub fn hard() -> Self {
        Self {
            samples: 0,
            ..Self::default()
        }
    }
}

/// All intermediate states of one relaxed quicksort.
#[derive(Debug, Clone)]
pub struct SortTrace<'t> {
    /// `x_0 ..= x_d`, each `[n, m]`.
    pub states: Vec<Var<'t>>,
    /// Keys before each stage and after the last one, each `[n, 1]`.
    pub keys: Vec<Var<'t>>,
    /// The relaxed half-permutation of every stage, order `1 ..= d`.
    pub stages: Vec<RelaxedHalfPerm<'t>>,
}

impl<'t> SortTrace<'t> {
    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn output(&self) -> Var<'t> {
        *self.states.last().expect("a trace has at least the input state")
    }
}

/// Runs `log2 n` relaxed half-permutation stages over `items` (`[n, m]`).
///
/// Each stage computes its flags from the keys as permuted so far and moves
/// keys and items with the same mixture.
pub fn quicksort_forward<'t>(
    items: &Var<'t>,
    keys: &Var<'t>,
    cfg: &SortConfig,
    tables: &mut PermTables,
    rng: &mut Rng,
) -> Result<SortTrace<'t>> {
    let shape = items.shape();
    if shape.len() != 2 {
        return Err(config_err("items must be an [n, m] matrix"));
    }
    let n = shape[0];
    if !n.is_power_of_two() || n < 2 {
        return Err(config_err(format!("cannot sort {n} items; need a power of two >= 2")));
    }
    let keys = keys.reshape(vec![n, 1]).map_err(|_| Error::ShapeMismatch {
        op: "quicksort_forward",
        left: shape.clone(),
        right: keys.shape(),
    })?;
    let depth = n.trailing_zeros() as usize;
    let mut trace = SortTrace {
        states: vec![*items],
        keys: vec![keys],
        stages: Vec::with_capacity(depth),
    };
    for order in 1..=depth {
        let k = *trace.keys.last().unwrap();
        let logits = relax_logits(&k.reshape(vec![n])?, order, cfg.temperature)?;
        let table = tables.get(n, order)?;
        let stage = sample_half_perms(&logits, order, cfg.samples, &table, rng)?;
        let x = stage.apply(trace.states.last().unwrap())?;
        let k = stage.apply(&k)?;
        trace.states.push(x);
        trace.keys.push(k);
        trace.stages.push(stage);
    }
    Ok(trace)
}

/// `sum_i bce(x_i, t_i)` where `t_d` is the sorted target and
/// `t_(i-1) = M_i^T t_i` feeds it back through the stages.
pub fn intermediate_loss<'t>(trace: &SortTrace<'t>, target: &Tensor) -> Result<Var<'t>> {
    let out = trace.output();
    if out.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "intermediate_loss",
            left: out.shape(),
            right: target.shape().to_vec(),
        });
    }
    let mut t = out.tape().constant(target.clone());
    let mut total: Option<Var<'t>> = None;
    for i in (1..=trace.depth()).rev() {
        let l = trace.states[i].bce_loss(&t)?;
        total = Some(match total {
            Some(acc) => acc.add(&l)?,
            None => l,
        });
        t = trace.stages[i - 1].apply_transpose(&t)?;
    }
    total.ok_or_else(|| config_err("empty sort trace"))
}
