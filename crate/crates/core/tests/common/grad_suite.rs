//! Finite-difference cases for every differentiable operation.
//!
//! Each op builds a scalar from random inputs drawn from its case seed;
//! any sampling inside the op uses a generator re-created from the same
//! seed, so the sample stays fixed across perturbations.

use super::{check, normal_tensor, uniform_tensor, weighted_sum, GradReport};
use rand::Rng;
use sparse_hyper::autodiff::{Tape, Var};
use sparse_hyper::glimpse::{bbox_to_grid, box_from_raw, glimpse_forward, GlimpseSpec};
use sparse_hyper::reinforce::score_surrogate;
use sparse_hyper::rng;
use sparse_hyper::sort::{
    intermediate_loss, quicksort_forward, relax_o, sample_half_perms, PermTable, PermTables, SortConfig,
};
use sparse_hyper::sparse::{
    blocked_proportions, expand_sigma, gaussian_log_density, map_tuples, normalize_and_distribute,
    own_log_density, proportions, sparse_mm, spmm_flat, ContinuousTupleSet, HyperlayerShape,
    IntTuples, LayerSample, SamplingConfig, SparseCoo,
};
use sparse_hyper::{Result, Tensor};

pub struct Op {
    pub name: &'static str,
    /// Elementwise ops are held to the tighter 1e-4 bound.
    pub elementwise: bool,
    pub case: fn(u64) -> GradReport,
}

#[derive(Debug, Clone, Copy)]
pub struct OpResult {
    pub cases: usize,
    pub worst_elem: f64,
    pub worst_total: f64,
    pub passed: bool,
}

impl Op {
    pub fn bound(&self) -> f64 {
        if self.elementwise {
            1e-4
        } else {
            1e-3
        }
    }

    pub fn run(&self, cases: usize) -> OpResult {
        let (mut worst_elem, mut worst_total) = (0.0f64, 0.0f64);
        for c in 0..cases as u64 {
            let r = (self.case)(c);
            worst_elem = worst_elem.max(r.max_elem_rel);
            worst_total = worst_total.max(r.total_rel);
        }
        let err = if self.elementwise { worst_elem } else { worst_total };
        OpResult {
            cases,
            worst_elem,
            worst_total,
            passed: err < self.bound() && worst_elem.is_finite() && worst_total.is_finite(),
        }
    }
}

fn unary(seed: u64, shape: &[usize], lo: f64, hi: f64, f: for<'t> fn(&Var<'t>) -> Var<'t>) -> GradReport {
    let x = uniform_tensor(shape, lo, hi, &mut rng::stream(seed, 0));
    check(&[x], |_, v| Ok(weighted_sum(&f(&v[0]), seed)))
}

fn dims(r: &mut impl Rng) -> (usize, usize) {
    (r.gen_range(1..5), r.gen_range(1..5))
}

/// Uniform values kept at least 0.05 away from the kinks of relu/clamp.
fn away_from(shape: &[usize], kinks: &[f64], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let x: f64 = r.gen_range(-2.0..2.0);
            if kinks.iter().all(|k| (x - k).abs() > 0.05) {
                break x;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn binary(seed: u64, f: for<'t> fn(&Var<'t>, &Var<'t>) -> Result<Var<'t>>) -> GradReport {
    let mut r = rng::stream(seed, 0);
    let (a, b) = dims(&mut r);
    let x = normal_tensor(&[a, b], &mut r);
    let y = normal_tensor(&[a, b], &mut r);
    check(&[x, y], |_, v| Ok(weighted_sum(&f(&v[0], &v[1])?, seed)))
}

fn autodiff_ops() -> Vec<Op> {
    vec![
        Op { name: "add", elementwise: true, case: |s| binary(s, |a, b| a.add(b)) },
        Op { name: "sub", elementwise: true, case: |s| binary(s, |a, b| a.sub(b)) },
        Op { name: "mul", elementwise: true, case: |s| binary(s, |a, b| a.mul(b)) },
        Op {
            name: "mul_const",
            elementwise: true,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let c = normal_tensor(&[3, 2], &mut r);
                let x = normal_tensor(&[3, 2], &mut r);
                check(&[x], |_, v| Ok(weighted_sum(&v[0].mul_const(&c)?, s)))
            },
        },
        Op {
            name: "add_const",
            elementwise: true,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let c = normal_tensor(&[4], &mut r);
                let x = normal_tensor(&[4], &mut r);
                check(&[x], |_, v| Ok(weighted_sum(&v[0].add_const(&c)?.square(), s)))
            },
        },
        Op { name: "add_scalar", elementwise: true, case: |s| unary(s, &[5], -2.0, 2.0, |x| x.add_scalar(0.7).square()) },
        Op { name: "mul_scalar", elementwise: true, case: |s| unary(s, &[5], -2.0, 2.0, |x| x.mul_scalar(-1.3)) },
        Op { name: "neg", elementwise: true, case: |s| unary(s, &[2, 3], -2.0, 2.0, |x| x.neg()) },
        Op { name: "square", elementwise: true, case: |s| unary(s, &[2, 3], -2.0, 2.0, |x| x.square()) },
        Op { name: "exp", elementwise: true, case: |s| unary(s, &[2, 3], -2.0, 2.0, |x| x.exp()) },
        Op { name: "ln", elementwise: true, case: |s| unary(s, &[2, 3], 0.2, 3.0, |x| x.ln()) },
        Op { name: "sigmoid", elementwise: true, case: |s| unary(s, &[2, 3], -4.0, 4.0, |x| x.sigmoid()) },
        Op { name: "softplus", elementwise: true, case: |s| unary(s, &[2, 3], -4.0, 4.0, |x| x.softplus()) },
        Op {
            name: "relu",
            elementwise: true,
            case: |s| {
                let x = away_from(&[3, 3], &[0.0], &mut rng::stream(s, 0));
                check(&[x], |_, v| Ok(weighted_sum(&v[0].relu(), s)))
            },
        },
        Op {
            name: "clamp",
            elementwise: true,
            case: |s| {
                let x = away_from(&[3, 3], &[-0.5, 0.8], &mut rng::stream(s, 0));
                check(&[x], |_, v| Ok(weighted_sum(&v[0].clamp(-0.5, 0.8), s)))
            },
        },
        Op {
            name: "mul_row_const",
            elementwise: true,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let x = normal_tensor(&[3, 4], &mut r);
                let row = normal_tensor(&[4], &mut r).into_data();
                check(&[x], |_, v| Ok(weighted_sum(&v[0].mul_row_const(&row)?, s)))
            },
        },
        Op {
            name: "outer_const",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let x = normal_tensor(&[3], &mut r);
                let row = normal_tensor(&[2], &mut r).into_data();
                check(&[x], |_, v| Ok(weighted_sum(&v[0].outer_const(&row)?, s)))
            },
        },
        Op {
            name: "add_row",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let (a, b) = dims(&mut r);
                let x = normal_tensor(&[a, b], &mut r);
                let bias = normal_tensor(&[b], &mut r);
                check(&[x, bias], |_, v| Ok(weighted_sum(&v[0].add_row(&v[1])?, s)))
            },
        },
        Op { name: "sum", elementwise: false, case: |s| unary(s, &[3, 2], -2.0, 2.0, |x| x.square().sum()) },
        Op { name: "mean", elementwise: false, case: |s| unary(s, &[3, 2], -2.0, 2.0, |x| x.square().mean()) },
        Op {
            name: "matmul",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let (a, b) = dims(&mut r);
                let c = r.gen_range(1..5);
                let x = normal_tensor(&[a, b], &mut r);
                let y = normal_tensor(&[b, c], &mut r);
                check(&[x, y], |_, v| Ok(weighted_sum(&v[0].matmul(&v[1])?, s)))
            },
        },
        Op {
            name: "transpose",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let (a, b) = dims(&mut r);
                let x = normal_tensor(&[a, b], &mut r);
                check(&[x], |_, v| Ok(weighted_sum(&v[0].transpose()?, s)))
            },
        },
        Op {
            name: "reshape",
            elementwise: false,
            case: |s| unary(s, &[2, 6], -2.0, 2.0, |x| x.reshape(vec![3, 4]).unwrap().square()),
        },
        Op {
            name: "gather",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let x = normal_tensor(&[6], &mut r);
                let idx: Vec<usize> = (0..8).map(|_| r.gen_range(0..6)).collect();
                check(&[x], |_, v| Ok(weighted_sum(&v[0].gather(&idx, vec![2, 4])?, s)))
            },
        },
        Op {
            name: "concat_cols",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let x = normal_tensor(&[3, 2], &mut r);
                let y = normal_tensor(&[3, 1], &mut r);
                check(&[x, y], |_, v| Ok(weighted_sum(&Var::concat_cols(&[v[0], v[1]])?, s)))
            },
        },
        Op {
            name: "row_normalize",
            elementwise: false,
            case: |s| {
                let x = uniform_tensor(&[3, 4], 0.1, 2.0, &mut rng::stream(s, 0));
                check(&[x], |_, v| Ok(weighted_sum(&v[0].row_normalize()?, s)))
            },
        },
        Op {
            name: "mse_loss",
            elementwise: false,
            case: |s| binary(s, |a, b| a.mse_loss(b)),
        },
        Op {
            name: "bce_loss",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let p = uniform_tensor(&[4, 2], 0.05, 0.95, &mut r);
                let t = uniform_tensor(&[4, 2], 0.0, 1.0, &mut r);
                check(&[p, t], |_, v| v[0].bce_loss(&v[1]))
            },
        },
        Op {
            name: "cross_entropy",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let x = normal_tensor(&[5, 3], &mut r);
                let labels: Vec<usize> = (0..5).map(|_| r.gen_range(0..3)).collect();
                check(&[x], |_, v| v[0].cross_entropy(&labels))
            },
        },
    ]
}

/// Random `[k, r]` means inside `dims`, positive `[k, r]` variances and integer tuples.
fn density_inputs(seed: u64, k: usize, n_tuples: usize) -> (Tensor, Tensor, IntTuples) {
    let mut r = rng::stream(seed, 0);
    let dims = [5, 6];
    let means = Tensor::new(
        vec![k, 2],
        (0..2 * k).map(|i| r.gen_range(0.0..dims[i % 2] as f64)).collect(),
    )
    .unwrap();
    let vars = uniform_tensor(&[k, 2], 0.5, 3.0, &mut r);
    let rows: Vec<Vec<usize>> = (0..n_tuples).map(|_| vec![r.gen_range(0..5), r.gen_range(0..6)]).collect();
    (means, vars, IntTuples::from_rows(2, &rows))
}

fn sparse_ops() -> Vec<Op> {
    vec![
        Op {
            name: "map_tuples",
            elementwise: true,
            case: |s| unary(s, &[3, 2], -3.0, 3.0, |x| map_tuples(x, &[5, 9]).unwrap()),
        },
        Op {
            name: "expand_sigma",
            elementwise: false,
            case: |s| unary(s, &[3], -3.0, 3.0, |x| expand_sigma(x, &[5, 9], 0.1).unwrap()),
        },
        Op {
            name: "proportions",
            elementwise: false,
            case: |s| {
                let (m, v, t) = density_inputs(s, 3, 7);
                check(&[m, v], |_, x| Ok(weighted_sum(&proportions(&x[0], &x[1], &t)?, s)))
            },
        },
        Op {
            name: "blocked_proportions",
            elementwise: false,
            case: |s| {
                let (m, v, t) = density_inputs(s, 3, 9);
                check(&[m, v], |_, x| Ok(weighted_sum(&blocked_proportions(&x[0], &x[1], &t)?, s)))
            },
        },
        Op {
            name: "gaussian_log_density",
            elementwise: false,
            case: |s| {
                let (m, v, t) = density_inputs(s, 3, 7);
                check(&[m, v], |_, x| Ok(weighted_sum(&gaussian_log_density(&x[0], &x[1], &t)?, s)))
            },
        },
        Op {
            name: "own_log_density",
            elementwise: false,
            case: |s| {
                let (m, v, _) = density_inputs(s, 4, 0);
                let pts = normal_tensor(&[4, 2], &mut rng::stream(s, 1)).zip_map(&m, |a, b| a + b).unwrap();
                check(&[m, v], |_, x| Ok(weighted_sum(&own_log_density(&x[0], &x[1], &pts)?, s)))
            },
        },
        Op {
            name: "normalize_and_distribute",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let (k, n) = (r.gen_range(1..5), r.gen_range(2..9));
                let p = uniform_tensor(&[k, n], 0.05, 1.0, &mut r);
                let vals = normal_tensor(&[k], &mut r);
                let mut mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.7)).collect();
                mask[0] = true;
                check(&[p, vals], |_, x| Ok(weighted_sum(&normalize_and_distribute(&x[0], &mask, &x[1])?, s)))
            },
        },
        Op {
            name: "sparse_mm",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let shape = HyperlayerShape::new(vec![r.gen_range(1..5), r.gen_range(1..4)], vec![r.gen_range(1..5)]).unwrap();
                let d = shape.dims();
                let nnz = r.gen_range(1..12);
                let rows: Vec<Vec<usize>> = (0..nnz).map(|_| d.iter().map(|&h| r.gen_range(0..h)).collect()).collect();
                let tuples = IntTuples::from_rows(d.len(), &rows);
                let vals = normal_tensor(&[nnz], &mut r);
                let mut xs = shape.input_dims.clone();
                xs.insert(0, 2);
                let x = normal_tensor(&xs, &mut r);
                check(&[vals, x], |_, v| {
                    let w = SparseCoo::new(tuples.clone(), v[0], shape.clone())?;
                    Ok(weighted_sum(&sparse_mm(&w, &v[1])?, s))
                })
            },
        },
        Op {
            name: "spmm_flat",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let (out, inp, nnz) = (r.gen_range(1..6), r.gen_range(1..6), r.gen_range(1..10));
                let rows: Vec<usize> = (0..nnz).map(|_| r.gen_range(0..out)).collect();
                let cols: Vec<usize> = (0..nnz).map(|_| r.gen_range(0..inp)).collect();
                let vals = normal_tensor(&[nnz], &mut r);
                let x = normal_tensor(&[3, inp], &mut r);
                check(&[vals, x], |_, v| Ok(weighted_sum(&spmm_flat(rows.clone(), cols.clone(), &v[0], &v[1], out)?, s)))
            },
        },
        Op {
            name: "sparse_layer",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let shape = HyperlayerShape::square(6).unwrap();
                let k = 4;
                let inputs = vec![
                    normal_tensor(&[k, 2], &mut r),
                    normal_tensor(&[k], &mut r),
                    normal_tensor(&[k], &mut r),
                    normal_tensor(&[5, 6], &mut r),
                ];
                let cfg = SamplingConfig::new(2, 2, vec![3, 3]);
                let means = map_tuples(&Tape::new().constant(inputs[0].clone()), &shape.dims()).unwrap().value();
                let sample = LayerSample::draw(&means, &shape.dims(), &cfg, &mut r).unwrap();
                check(&inputs, |_, v| {
                    let set = ContinuousTupleSet { means_raw: v[0], sigmas_raw: v[1], values: v[2], tau: 0.1 };
                    Ok(weighted_sum(&set.forward(&shape, &sample, &v[3])?, s))
                })
            },
        },
        Op {
            name: "score_surrogate",
            elementwise: false,
            case: |s| {
                let (m, v, _) = density_inputs(s, 3, 0);
                let pts = uniform_tensor(&[3, 2], 0.0, 5.0, &mut rng::stream(s, 1));
                check(&[m, v], |_, x| score_surrogate(&x[0], &x[1], &pts, 0.37))
            },
        },
    ]
}

/// Distinct keys whose gaps stay well above the finite-difference step.
fn spread_keys(n: usize, r: &mut impl Rng) -> Tensor {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, r.gen_range(0..=i));
    }
    Tensor::vector(perm.iter().map(|&p| 0.3 * p as f64 + r.gen_range(0.0..0.1)).collect())
}

fn sort_ops() -> Vec<Op> {
    vec![
        Op {
            name: "relax_o",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let n: usize = [4, 8, 16][s as usize % 3];
                let order = r.gen_range(1..=n.trailing_zeros() as usize);
                let keys = spread_keys(n, &mut r);
                check(&[keys], |_, v| Ok(weighted_sum(&relax_o(&v[0], order, 2.0)?, s)))
            },
        },
        Op {
            name: "sample_half_perms",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let n: usize = [4, 8][s as usize % 2];
                let order = r.gen_range(1..=n.trailing_zeros() as usize);
                let logits = away_from(&[n], &[0.0], &mut r);
                let table = PermTable::generate(n, order, 64, &mut rng::stream(s, 2)).unwrap();
                let x = normal_tensor(&[n, 2], &mut r);
                check(&[logits, x], |_, v| {
                    let hp = sample_half_perms(&v[0], order, 3, &table, &mut rng::stream(s, 3))?;
                    let y = hp.apply(&v[1])?.add(&hp.apply_transpose(&v[1])?)?;
                    Ok(weighted_sum(&y, s).add(&weighted_sum(&hp.log_proportions, s + 1))?)
                })
            },
        },
        Op {
            name: "intermediate_loss",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let n: usize = [4, 8][s as usize % 2];
                let keys = spread_keys(n, &mut r).reshape(vec![n, 1]).unwrap();
                let items = uniform_tensor(&[n, 2], 0.05, 0.95, &mut r);
                let target = uniform_tensor(&[n, 2], 0.0, 1.0, &mut r);
                let cfg = SortConfig { samples: 2, temperature: 3.0 };
                check(&[keys, items], |_, v| {
                    let mut tables = PermTables::new(s, 64);
                    let trace = quicksort_forward(&v[1], &v[0], &cfg, &mut tables, &mut rng::stream(s, 3))?;
                    intermediate_loss(&trace, &target)
                })
            },
        },
    ]
}

fn glimpse_ops() -> Vec<Op> {
    vec![
        Op {
            name: "box_from_raw",
            elementwise: false,
            case: |s| unary(s, &[2, 8], -3.0, 3.0, |x| box_from_raw(x, 2, 10, 12).unwrap()),
        },
        Op {
            name: "bbox_to_grid",
            elementwise: false,
            case: |s| unary(s, &[3, 4], 0.0, 10.0, |x| bbox_to_grid(x, 3).unwrap()),
        },
        Op {
            name: "glimpse_forward",
            elementwise: false,
            case: |s| {
                let mut r = rng::stream(s, 0);
                let spec = GlimpseSpec {
                    count: 2,
                    size: 2,
                    height: 6,
                    width: 7,
                    sampling: SamplingConfig::new(1, 1, vec![3, 3]),
                    tau: 0.1,
                };
                let b = 2;
                let means = Tensor::new(
                    vec![b * spec.count * 4, 2],
                    (0..b * spec.count * 8).map(|i| r.gen_range(0.0..if i % 2 == 0 { 6.0 } else { 7.0 })).collect(),
                )
                .unwrap();
                let sample = spec.sample(&means, &mut r).unwrap();
                let inputs = vec![
                    means,
                    normal_tensor(&[spec.count], &mut r),
                    normal_tensor(&[spec.count], &mut r),
                    normal_tensor(&[b, 42], &mut r),
                ];
                check(&inputs, |_, v| Ok(weighted_sum(&glimpse_forward(&spec, &v[0], &v[1], &v[2], &v[3], &sample)?, s)))
            },
        },
    ]
}

pub fn all_ops() -> Vec<Op> {
    let mut ops = autodiff_ops();
    ops.extend(sparse_ops());
    ops.extend(sort_ops());
    ops.extend(glimpse_ops());
    ops
}
