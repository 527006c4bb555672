use super::median::chunk_size;
use crate::autodiff::{softplus, Var};
use crate::error::{config_err, Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use std::collections::HashMap;
use std::rc::Rc;

/// A binary flag vector describing one order-`d` half-permutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HalfPermSpec {
    pub order: usize,
    pub o: Vec<u8>,
}

impl HalfPermSpec {
    pub fn new(order: usize, o: Vec<u8>) -> Result<Self> {
        let chunk = chunk_size(o.len(), order)?;
        for (c, part) in o.chunks(chunk).enumerate() {
            let ones = part.iter().filter(|&&b| b == 1).count();
            if ones * 2 != chunk || part.iter().any(|&b| b > 1) {
                return Err(Error::UnbalancedChunk { chunk_start: c * chunk });
            }
        }
        Ok(Self { order, o })
    }

    pub fn n(&self) -> usize {
        self.o.len()
    }

    /// Bit-packed flags; distinct specs of the same size have distinct keys.
    pub fn packed(&self) -> u64 {
        self.o.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }
}

/// The flags of the identity half-permutation: zeros then ones in every chunk.
pub fn identity_o(n: usize, order: usize) -> Result<Vec<u8>> {
    let chunk = chunk_size(n, order)?;
    Ok((0..n).map(|i| u8::from(i % chunk >= chunk / 2)).collect())
}

/// Row index of every column of `P^d(o)`: the `j`-th zero of a chunk goes to
/// `start + j`, the `j`-th one to `start + chunk/2 + j`.
pub fn o_to_rows(o: &[u8], order: usize) -> Result<Vec<usize>> {
    let chunk = chunk_size(o.len(), order)?;
    let half = chunk / 2;
    let mut rows = Vec::with_capacity(o.len());
    for (c, part) in o.chunks(chunk).enumerate() {
        let start = c * chunk;
        // cumulative sums that reset at every chunk boundary
        let (mut lower, mut upper) = (0usize, 0usize);
        for &b in part {
            if b == 1 {
                upper += 1;
                rows.push(start + half + upper - 1);
            } else {
                lower += 1;
                rows.push(start + lower - 1);
            }
        }
        if lower != half || upper != half {
            return Err(Error::UnbalancedChunk { chunk_start: start });
        }
    }
    Ok(rows)
}

/// `round(o')` from logits, repaired to be balanced: inside each chunk the
/// lower half by `(logit, index)` gets 0. Exact ties at 0.5 therefore go to 0
/// for the lower index first.
pub fn round_o(logits: &[f64], order: usize) -> Result<Vec<u8>> {
    let chunk = chunk_size(logits.len(), order)?;
    let mut o = vec![0u8; logits.len()];
    let mut repaired = false;
    for (c, vals) in logits.chunks(chunk).enumerate() {
        let mut idx: Vec<usize> = (0..chunk).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        for &i in &idx[chunk / 2..] {
            o[c * chunk + i] = 1;
        }
        repaired |= (0..chunk).any(|i| (vals[i] > 0.0) != (o[c * chunk + i] == 1));
    }
    if repaired {
        log::debug!("round_o: unbalanced rounding repaired");
    }
    Ok(o)
}

/// Random balanced flag vectors for one `(n, d)`, drawn once and reused.
#[derive(Debug, Clone)]
pub struct PermTable {
    pub n: usize,
    pub order: usize,
    rows: Vec<Vec<u8>>,
}

impl PermTable {
    /// Shuffles the identity flags inside every chunk, `count` times.
    pub fn generate(n: usize, order: usize, count: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let chunk = chunk_size(n, order)?;
        if n > 64 {
            return Err(config_err("half-permutations are limited to n <= 64"));
        }
        let base = identity_o(n, order)?;
        let rows = (0..count)
            .map(|_| {
                let mut o = base.clone();
                for part in o.chunks_mut(chunk) {
                    part.shuffle(rng);
                }
                o
            })
            .collect();
        Ok(Self { n, order, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.rows[i]
    }

    pub fn draw(&self, rng: &mut impl rand::Rng) -> &[u8] {
        &self.rows[rng.gen_range(0..self.rows.len())]
    }
}

/// Lazily built tables keyed by `(n, d)`, all derived from one seed.
#[derive(Debug)]
pub struct PermTables {
    seed: u64,
    rows: usize,
    tables: HashMap<(usize, usize), Rc<PermTable>>,
}

impl PermTables {
    pub fn new(seed: u64, rows: usize) -> Self {
        Self {
            seed,
            rows: rows.max(1),
            tables: HashMap::new(),
        }
    }

    pub fn get(&mut self, n: usize, order: usize) -> Result<Rc<PermTable>> {
        if let Some(t) = self.tables.get(&(n, order)) {
            return Ok(t.clone());
        }
        let mut r = rng::stream(rng::split(self.seed, (n as u64) << 8 | order as u64), rng::streams::PERM_TABLE);
        let table = Rc::new(PermTable::generate(n, order, self.rows, &mut r)?);
        self.tables.insert((n, order), table.clone());
        Ok(table)
    }
}

/// A convex mixture of sampled half-permutation matrices.
///
/// Column `i` of the mixture has entries `weights[s]` at rows `rows[s][i]`;
/// every column sums to one.
#[derive(Debug, Clone)]
pub struct RelaxedHalfPerm<'t> {
    pub order: usize,
    pub specs: Vec<HalfPermSpec>,
    pub rows: Rc<Vec<Vec<usize>>>,
    pub mask: Vec<bool>,
    /// Unnormalized log proportions `log p(o)`, one per spec.
    pub log_proportions: Var<'t>,
    /// Column-normalized mixing weights (masked specs are exactly 0).
    pub weights: Var<'t>,
}

/// `log p(o_s) = sum_i log o'_i if o_s[i] = 1 else log(1 - o'_i)`, evaluated
/// from logits with `log sigmoid(z) = -softplus(-z)`.
fn spec_log_proportions<'t>(logits: &Var<'t>, specs: &[HalfPermSpec]) -> Var<'t> {
    let z = logits.value();
    let flags: Vec<Vec<u8>> = specs.iter().map(|s| s.o.clone()).collect();
    let value: Vec<f64> = flags
        .iter()
        .map(|o| {
            o.iter()
                .zip(z.data())
                .map(|(&b, &z)| if b == 1 { -softplus(-z) } else { -softplus(z) })
                .sum()
        })
        .collect();
    logits.tape().custom(
        &[*logits],
        Tensor::vector(value),
        Box::new(move |g, inputs, _| {
            let z = inputs[0].data();
            let mut gz = vec![0.0; z.len()];
            for (o, &gs) in flags.iter().zip(g.data()) {
                for ((acc, &b), &zi) in gz.iter_mut().zip(o).zip(z) {
                    *acc += gs * (b as f64 - crate::autodiff::sigmoid(zi));
                }
            }
            vec![Some(Tensor::vector(gz))]
        }),
    )
}

/// `w_s = mask_s exp(l_s) / sum_t mask_t exp(l_t)`, shifted by the max for stability.
fn masked_normalize<'t>(log_p: &Var<'t>, mask: &[bool]) -> Result<Var<'t>> {
    let l = log_p.value();
    let max = l
        .data()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateColumn { column: 0 });
    }
    let e: Vec<f64> = l
        .data()
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|x| x / total).collect();
    Ok(log_p.tape().custom(
        &[*log_p],
        Tensor::vector(w),
        Box::new(|g, _, out| {
            let dot: f64 = g.data().iter().zip(out.data()).map(|(a, b)| a * b).sum();
            let data = g
                .data()
                .iter()
                .zip(out.data())
                .map(|(gs, ws)| ws * (gs - dot))
                .collect();
            vec![Some(Tensor::vector(data))]
        }),
    ))
}

/// Draws `a` balanced flag vectors from `table`, adds `round(o')` first, and
/// weighs every distinct spec by its proportion under the relaxed flags.
/// Repeated specs get weight zero.
pub fn sample_half_perms<'t>(
    logits: &Var<'t>,
    order: usize,
    a: usize,
    table: &PermTable,
    rng: &mut Rng,
) -> Result<RelaxedHalfPerm<'t>> {
    let z = logits.value();
    let n = z.len();
    if table.n != n || table.order != order {
        return Err(config_err(format!(
            "permutation table is for ({}, {}), needed ({n}, {order})",
            table.n, table.order
        )));
    }
    let mut specs = Vec::with_capacity(a + 1);
    specs.push(HalfPermSpec::new(order, round_o(z.data(), order)?)?);
    for _ in 0..a {
        specs.push(HalfPermSpec {
            order,
            o: table.draw(rng).to_vec(),
        });
    }
    let mut seen = std::collections::HashSet::with_capacity(specs.len());
    let mask: Vec<bool> = specs.iter().map(|s| seen.insert(s.packed())).collect();
    let rows = specs
        .iter()
        .map(|s| o_to_rows(&s.o, order))
        .collect::<Result<Vec<_>>>()?;
    let log_proportions = spec_log_proportions(logits, &specs);
    let weights = masked_normalize(&log_proportions, &mask)?;
    Ok(RelaxedHalfPerm {
        order,
        specs,
        rows: Rc::new(rows),
        mask,
        log_proportions,
        weights,
    })
}

impl<'t> RelaxedHalfPerm<'t> {
    pub fn n(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Dense `n x n` mixture matrix.
    pub fn to_dense(&self) -> Tensor {
        let n = self.n();
        let mut m = Tensor::zeros(&[n, n]);
        let w = self.weights.value();
        for (rows, &ws) in self.rows.iter().zip(w.data()) {
            for (col, &row) in rows.iter().enumerate() {
                m.data_mut()[row * n + col] += ws;
            }
        }
        m
    }

    /// `M x` for `x` of shape `[n, m]`.
    pub fn apply(&self, x: &Var<'t>) -> Result<Var<'t>> {
        mix(&self.weights, self.rows.clone(), x, false)
    }

    /// `M^T x` for `x` of shape `[n, m]`.
    pub fn apply_transpose(&self, x: &Var<'t>) -> Result<Var<'t>> {
        mix(&self.weights, self.rows.clone(), x, true)
    }
}

/// `y[rows_s[i]] += w_s x[i]`, or the transpose `y[i] += w_s x[rows_s[i]]`.
fn mix<'t>(weights: &Var<'t>, rows: Rc<Vec<Vec<usize>>>, x: &Var<'t>, transpose: bool) -> Result<Var<'t>> {
    let shape = x.shape();
    let n = rows.first().map_or(0, Vec::len);
    if shape.len() != 2 || shape[0] != n || weights.shape() != [rows.len()] {
        return Err(Error::ShapeMismatch {
            op: "mix_half_perms",
            left: vec![n],
            right: shape,
        });
    }
    let m = shape[1];
    let w = weights.value();
    let mut y = vec![0.0; n * m];
    x.with_value(|xv| {
        let xd = xv.data();
        for (perm, &ws) in rows.iter().zip(w.data()) {
            if ws == 0.0 {
                continue;
            }
            for (i, &r) in perm.iter().enumerate() {
                let (dst, src) = if transpose { (i, r) } else { (r, i) };
                for f in 0..m {
                    y[dst * m + f] += ws * xd[src * m + f];
                }
            }
        }
    });
    // Rc is not Send, but tapes are single-threaded anyway
    let rows_bw = rows.clone();
    Ok(weights.tape().custom(
        &[*weights, *x],
        Tensor::from_parts(vec![n, m], y),
        Box::new(move |g, inputs, _| {
            let (w, xd, g) = (inputs[0].data(), inputs[1].data(), g.data());
            let mut gw = vec![0.0; rows_bw.len()];
            let mut gx = vec![0.0; n * m];
            for (s, perm) in rows_bw.iter().enumerate() {
                for (i, &r) in perm.iter().enumerate() {
                    let (dst, src) = if transpose { (i, r) } else { (r, i) };
                    let gd = &g[dst * m..(dst + 1) * m];
                    let xs = &xd[src * m..(src + 1) * m];
                    gw[s] += gd.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                    for f in 0..m {
                        gx[src * m + f] += w[s] * gd[f];
                    }
                }
            }
            vec![
                Some(Tensor::vector(gw)),
                Some(Tensor::from_parts(vec![n, m], gx)),
            ]
        }),
    ))
}
