//! Oracle, invariant and round-trip checks. Each returns `Ok(summary)` or
//! `Err(first failure)` so the acceptance suite can report one line per group.

use super::{normal_tensor, uniform_tensor};
use rand::Rng;
use sparse_hyper::autodiff::{ParamStore, Tape};
use sparse_hyper::rng;
use sparse_hyper::sort::{
    chunk_size, o_to_rows, quicksort_forward, sample_half_perms, PermTable, PermTables, SortConfig,
};
use sparse_hyper::sparse::{
    flat_to_tuple, flatten_index, mask_duplicates, normalize_and_distribute, proportions, sparse_mm,
    HyperlayerShape, IntTuples, SamplingConfig, SparseCoo, SparseLayer,
};
use sparse_hyper::Tensor;

pub type Check = Result<String, String>;

fn random_tuples(r: &mut impl Rng, dims: &[usize], count: usize) -> IntTuples {
    let rows: Vec<Vec<usize>> = (0..count).map(|_| dims.iter().map(|&h| r.gen_range(0..h)).collect()).collect();
    IntTuples::from_rows(dims.len(), &rows)
}

/// `sparse_mm` against a dense multiply on `cases` random matrices.
pub fn sparse_mm_matches_dense(cases: u64) -> Check {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut r = rng::stream(case, 40);
        let out_rank = r.gen_range(1..3);
        let in_rank = r.gen_range(1..3);
        let output: Vec<usize> = (0..out_rank).map(|_| r.gen_range(1..5)).collect();
        let input: Vec<usize> = (0..in_rank).map(|_| r.gen_range(1..5)).collect();
        let shape = HyperlayerShape::new(input, output).unwrap();
        let nnz = r.gen_range(1..=64);
        let tuples = random_tuples(&mut r, &shape.dims(), nnz);
        let batch = r.gen_range(1..4);
        let (n_out, n_in) = (shape.output_len(), shape.input_len());
        let tape = Tape::new();
        let values = tape.constant(normal_tensor(&[nnz], &mut r));
        let x = normal_tensor(&[batch, n_in], &mut r);
        let w = SparseCoo::new(tuples.clone(), values, shape.clone()).unwrap();
        let mut xs = shape.input_dims.clone();
        xs.insert(0, batch);
        let y = sparse_mm(&w, &tape.constant(x.clone().reshape(xs).unwrap())).unwrap().value();

        // dense oracle built independently from the tuples
        let mut dense = vec![0.0; n_out * n_in];
        let out_dims = &shape.output_dims;
        let in_dims = &shape.input_dims;
        for (t, &v) in tuples.rows().zip(values.value().data()) {
            let row = flatten_index(&t[..out_dims.len()], out_dims);
            let col = flatten_index(&t[out_dims.len()..], in_dims);
            dense[row * n_in + col] += v;
        }
        for b in 0..batch {
            for i in 0..n_out {
                let want: f64 = (0..n_in).map(|j| dense[i * n_in + j] * x.data()[b * n_in + j]).sum();
                worst = worst.max((y.data()[b * n_out + i] - want).abs());
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("{cases} cases, max abs diff {worst:.1e}"))
    } else {
        Err(format!("max abs diff {worst:e} > 1e-12"))
    }
}

/// Hard-mode quicksort against `sort_by` on distinct random keys.
pub fn hard_quicksort_matches_sort(cases: u64, n: usize) -> Check {
    let mut tables = PermTables::new(1, 64);
    let mut samples = rng::stream(1, 41);
    for case in 0..cases {
        let mut r = rng::stream(case, 42 + n as u64);
        let keys: Vec<f64> = loop {
            let k: Vec<f64> = (0..n).map(|_| r.gen_range(-100.0..100.0)).collect();
            let mut s = k.clone();
            s.sort_by(f64::total_cmp);
            if s.windows(2).all(|w| w[0] < w[1]) {
                break k;
            }
        };
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![n, 1], keys.clone()).unwrap());
        let trace = quicksort_forward(&x, &x, &SortConfig::hard(), &mut tables, &mut samples)
            .map_err(|e| format!("n={n} case {case}: {e}"))?;
        let mut want = keys;
        want.sort_by(f64::total_cmp);
        if trace.output().value().data() != want.as_slice() {
            return Err(format!("n={n} case {case}: got {:?}, want {want:?}", trace.output().value().data()));
        }
    }
    Ok(format!("n={n}: {cases} vectors sorted exactly"))
}

/// The Cantor-code duplicate mask against the quadratic pairwise oracle.
pub fn cantor_mask_matches_oracle(cases: u64) -> Check {
    for case in 0..cases {
        let mut r = rng::stream(case, 43);
        let rank = r.gen_range(1..5);
        let dims: Vec<usize> = (0..rank).map(|_| r.gen_range(1..5)).collect();
        let count = r.gen_range(0..40);
        let tuples = random_tuples(&mut r, &dims, count);
        let got = mask_duplicates(&tuples).map_err(|e| e.to_string())?;
        let want: Vec<bool> = (0..count).map(|i| (0..i).all(|j| tuples.row(j) != tuples.row(i))).collect();
        if got != want {
            return Err(format!("case {case}: mask {got:?}, oracle {want:?}"));
        }
    }
    Ok(format!("{cases} batches agree"))
}

/// Row sums of the masked, normalized proportions, and `sum v' = sum v`.
pub fn proportions_normalize_and_conserve_mass(cases: u64) -> Check {
    let (mut worst_row, mut worst_mass) = (0.0f64, 0.0f64);
    for case in 0..cases {
        let mut r = rng::stream(case, 44);
        let dims = [r.gen_range(2..8), r.gen_range(2..8)];
        let k = r.gen_range(1..5);
        let count = r.gen_range(k..30);
        let tuples = random_tuples(&mut r, &dims, count);
        let mask = mask_duplicates(&tuples).unwrap();
        let tape = Tape::new();
        let means = uniform_tensor(&[k, 2], 0.0, dims[0].min(dims[1]) as f64, &mut r);
        let vars = uniform_tensor(&[k, 2], 0.5, 4.0, &mut r);
        let p = proportions(&tape.constant(means), &tape.constant(vars), &tuples).unwrap();
        for i in 0..k {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            let row = normalize_and_distribute(&p, &mask, &tape.constant(Tensor::vector(e))).unwrap();
            worst_row = worst_row.max((row.value().sum() - 1.0).abs());
        }
        let v = normal_tensor(&[k], &mut r);
        let out = normalize_and_distribute(&p, &mask, &tape.constant(v.clone())).unwrap().value();
        worst_mass = worst_mass.max((out.sum() - v.sum()).abs());
    }
    if worst_row <= 1e-9 && worst_mass <= 1e-9 {
        Ok(format!("row sums within {worst_row:.1e}, mass within {worst_mass:.1e}"))
    } else {
        Err(format!("row sum error {worst_row:e}, mass error {worst_mass:e}"))
    }
}

/// Relaxed half-permutations: columns sum to one, entries in `[0, 1]`,
/// nothing outside the diagonal chunks.
pub fn relaxed_half_perms_are_stochastic_block_diagonal(cases: u64) -> Check {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut r = rng::stream(case, 45);
        let n = 1usize << r.gen_range(1..6);
        let order = r.gen_range(1..=n.trailing_zeros() as usize);
        let chunk = chunk_size(n, order).unwrap();
        let table = PermTable::generate(n, order, 32, &mut r).unwrap();
        let tape = Tape::new();
        let logits = tape.constant(normal_tensor(&[n], &mut r).scale(3.0));
        let a = r.gen_range(0..6);
        let hp = sample_half_perms(&logits, order, a, &table, &mut r).map_err(|e| e.to_string())?;
        let m = hp.to_dense();
        for j in 0..n {
            let col: f64 = (0..n).map(|i| m.get(&[i, j])).sum();
            worst = worst.max((col - 1.0).abs());
            for i in 0..n {
                let v = m.get(&[i, j]);
                // sums of softmax weights may land one ulp above 1
                if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                    return Err(format!("case {case}: entry ({i},{j}) = {v}"));
                }
                if i / chunk != j / chunk && v != 0.0 {
                    return Err(format!("case {case}: entry ({i},{j}) = {v} outside its chunk"));
                }
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("column sums within {worst:.1e}, block-diagonal"))
    } else {
        Err(format!("column sum error {worst:e}"))
    }
}

/// `r(o)` is a permutation for random balanced flag vectors.
pub fn half_perm_rows_are_permutations(cases: u64) -> Check {
    for case in 0..cases {
        let mut r = rng::stream(case, 46);
        let n = 1usize << r.gen_range(1..7);
        let order = r.gen_range(1..=n.trailing_zeros() as usize);
        let table = PermTable::generate(n, order, 1, &mut r).unwrap();
        let rows = o_to_rows(table.row(0), order).map_err(|e| e.to_string())?;
        let mut seen = vec![false; n];
        for &i in &rows {
            if i >= n || seen[i] {
                return Err(format!("case {case}: {rows:?} is not a permutation"));
            }
            seen[i] = true;
        }
    }
    Ok(format!("{cases} flag vectors"))
}

fn odometer(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut t = vec![0; dims.len()];
    for _ in 0..total {
        out.push(t.clone());
        for d in (0..dims.len()).rev() {
            t[d] += 1;
            if t[d] < dims[d] {
                break;
            }
            t[d] = 0;
        }
    }
    out
}

/// `rs(fl(x)) = x`, and `fi` is a bijection onto `0..prod(dims)`.
pub fn flatten_round_trips(cases: u64) -> Check {
    for case in 0..cases {
        let mut r = rng::stream(case, 47);
        let rank = r.gen_range(1..=4);
        let dims: Vec<usize> = (0..rank).map(|_| r.gen_range(1..=8)).collect();
        let total: usize = dims.iter().product();
        let x = normal_tensor(&dims, &mut r);
        let mut flat = vec![f64::NAN; total];
        let mut hit = vec![false; total];
        for t in odometer(&dims) {
            let f = flatten_index(&t, &dims);
            if f >= total || hit[f] {
                return Err(format!("dims {dims:?}: fi{t:?} = {f} repeats or overflows"));
            }
            hit[f] = true;
            if flat_to_tuple(f, &dims) != t {
                return Err(format!("dims {dims:?}: inverse of {f} is not {t:?}"));
            }
            flat[f] = x.get(&t);
        }
        let back = Tensor::new(vec![total], flat).unwrap().reshape(dims.clone()).unwrap();
        if back != x {
            return Err(format!("dims {dims:?}: rs(fl(x)) differs from x"));
        }
    }
    Ok(format!("{cases} shapes, fi bijective"))
}

/// Gradients summed over tuple chunks against one full backward pass.
pub fn chunked_gradients_match(cases: u64) -> Check {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut r = rng::stream(case, 48);
        let n = r.gen_range(3..9);
        let k = r.gen_range(2..7);
        let chunks = r.gen_range(2..=k);
        let mut store = ParamStore::new();
        let layer = SparseLayer::new(&mut store, "w", HyperlayerShape::square(n).unwrap(), k, 0.1, &mut r).unwrap();
        let cfg = SamplingConfig::new(2, 2, vec![2, 2]);
        let sample = layer.sample(&store, &cfg, &mut r).unwrap();
        let x = normal_tensor(&[4, n], &mut r);
        let target = normal_tensor(&[4, n], &mut r);
        let (l1, g1) = layer
            .gradients(&store, &sample, &x, 1, |tape, y| y.mse_loss(&tape.constant(target.clone())))
            .unwrap();
        let (l2, g2) = layer
            .gradients(&store, &sample, &x, chunks, |tape, y| y.mse_loss(&tape.constant(target.clone())))
            .unwrap();
        worst = worst.max((l1 - l2).abs());
        for p in layer.params() {
            let (a, b) = (g1.param(p).unwrap(), g2.param(p).unwrap());
            for (u, v) in a.data().iter().zip(b.data()) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("{cases} layers, max diff {worst:.1e}"))
    } else {
        Err(format!("chunked gradients differ by {worst:e}"))
    }
}
