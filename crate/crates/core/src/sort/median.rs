use crate::autodiff::Var;
use crate::error::{config_err, Result};

/// Chunk length `n * 2^-(d-1)` of an order-`d` half-permutation.
pub fn chunk_size(n: usize, order: usize) -> Result<usize> {
    if order == 0 || !n.is_power_of_two() || (n >> (order - 1)) < 2 {
        return Err(config_err(format!("no order-{order} half-permutation over {n} elements")));
    }
    Ok(n >> (order - 1))
}

/// Positions of the two central order statistics of every chunk, ties by index.
fn central_pairs(keys: &[f64], chunk: usize) -> Vec<(usize, usize)> {
    keys.chunks(chunk)
        .enumerate()
        .map(|(c, vals)| {
            let mut idx: Vec<usize> = (0..vals.len()).collect();
            idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
            let h = vals.len() / 2;
            (c * chunk + idx[h - 1], c * chunk + idx[h])
        })
        .collect()
}

/// Per-element median of its chunk; even chunks use the mean of the two
/// central order statistics.
pub fn chunk_median(keys: &[f64], order: usize) -> Result<Vec<f64>> {
    let chunk = chunk_size(keys.len(), order)?;
    Ok(central_pairs(keys, chunk)
        .into_iter()
        .flat_map(|(a, b)| std::iter::repeat_n(0.5 * (keys[a] + keys[b]), chunk))
        .collect())
}

/// [`chunk_median`] on the tape; the gradient reaches the two central keys.
pub fn chunk_median_var<'t>(keys: &Var<'t>, order: usize) -> Result<Var<'t>> {
    let values = keys.value().into_data();
    let chunk = chunk_size(values.len(), order)?;
    let pairs = central_pairs(&values, chunk);
    let lo: Vec<usize> = pairs.iter().flat_map(|&(a, _)| std::iter::repeat_n(a, chunk)).collect();
    let hi: Vec<usize> = pairs.iter().flat_map(|&(_, b)| std::iter::repeat_n(b, chunk)).collect();
    let n = values.len();
    Ok(keys
        .gather(&lo, vec![n])?
        .add(&keys.gather(&hi, vec![n])?)?
        .mul_scalar(0.5))
}

/// Hard flags: 0 below the chunk median, 1 otherwise. Within each chunk the
/// lower half by `(key, index)` gets 0, which equals the comparison rule for
/// distinct keys and splits ties straddling the median by index.
pub fn hard_o(keys: &[f64], order: usize) -> Result<Vec<u8>> {
    let n = keys.len();
    let chunk = chunk_size(n, order)?;
    let medians = chunk_median(keys, order)?;
    let mut o = vec![0u8; n];
    for (c, vals) in keys.chunks(chunk).enumerate() {
        let mut idx: Vec<usize> = (0..chunk).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        for &i in &idx[chunk / 2..] {
            o[c * chunk + i] = 1;
        }
    }
    let tied = (0..n).any(|i| (keys[i] >= medians[i]) != (o[i] == 1));
    if tied {
        log::debug!("hard_o: ties at the median broken by index");
    }
    Ok(o)
}

/// `C * (key - chunk median)`, the logits of the relaxed flags.
pub fn relax_logits<'t>(keys: &Var<'t>, order: usize, temperature: f64) -> Result<Var<'t>> {
    let median = chunk_median_var(keys, order)?;
    Ok(keys.sub(&median)?.mul_scalar(temperature))
}

/// Relaxed flags `o' = sigmoid(C * (key - chunk median))`.
pub fn relax_o<'t>(keys: &Var<'t>, order: usize, temperature: f64) -> Result<Var<'t>> {
    Ok(relax_logits(keys, order, temperature)?.sigmoid())
}
