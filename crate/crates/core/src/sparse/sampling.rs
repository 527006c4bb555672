use super::{IntTuples, SamplingConfig};
use crate::autodiff::{sigmoid, softplus};
use crate::tensor::Tensor;
use rand::Rng;

/// Continuous tuple for one raw row: `sigmoid(raw) * h`.
pub fn map_tuple(raw: &[f64], dims: &[usize]) -> Vec<f64> {
    raw.iter().zip(dims).map(|(&x, &h)| sigmoid(x) * h as f64).collect()
}

/// Per-dimension variance for one raw spread scalar:
/// `softplus(raw + 2) * h * 0.1 + tau`.
pub fn expand_sigma_row(raw: f64, dims: &[usize], tau: f64) -> Vec<f64> {
    let s = softplus(raw + 2.0);
    dims.iter().map(|&h| s * h as f64 * 0.1 + tau).collect()
}

fn clamp_index(x: f64, h: usize) -> usize {
    if x <= 0.0 {
        0
    } else {
        (x as usize).min(h - 1)
    }
}

/// Rounds a continuous coordinate and clamps it into `[0, h - 1]`.
pub(crate) fn round_index(x: f64, h: usize) -> usize {
    clamp_index(x.round(), h)
}

/// The `2^r` floor/ceil combinations around `d`, clamped into bounds.
/// Bit `t` of the row number selects the ceiling in dimension `t`.
pub fn nearest_corners(d: &[f64], dims: &[usize], out: &mut IntTuples) {
    let r = d.len();
    let mut tuple = vec![0; r];
    for corner in 0..(1usize << r) {
        for t in 0..r {
            let v = if corner >> (r - 1 - t) & 1 == 1 { d[t].ceil() } else { d[t].floor() };
            tuple[t] = clamp_index(v, dims[t]);
        }
        out.push(&tuple);
    }
}

/// `count` tuples drawn uniformly from a box of size `region` centred on
/// `round(d)`, shifted to lie inside the bounds.
pub fn sample_local(
    d: &[f64],
    region: &[usize],
    dims: &[usize],
    count: usize,
    rng: &mut impl Rng,
    out: &mut IntTuples,
) {
    let starts: Vec<usize> = d
        .iter()
        .zip(region)
        .zip(dims)
        .map(|((&x, &l), &h)| {
            let centre = round_index(x, h) as i64;
            let start = centre - (l / 2) as i64;
            start.clamp(0, (h - l) as i64) as usize
        })
        .collect();
    let mut tuple = vec![0; d.len()];
    for _ in 0..count {
        for t in 0..d.len() {
            tuple[t] = starts[t] + rng.gen_range(0..region[t]);
        }
        out.push(&tuple);
    }
}

/// `count` tuples drawn uniformly over the whole index space.
pub fn sample_global(dims: &[usize], count: usize, rng: &mut impl Rng, out: &mut IntTuples) {
    let mut tuple = vec![0; dims.len()];
    for _ in 0..count {
        for (slot, &h) in tuple.iter_mut().zip(dims) {
            *slot = rng.gen_range(0..h);
        }
        out.push(&tuple);
    }
}

/// Builds `D'` for continuous tuples `means` (`[k, r]`): for every mean, its
/// corners, then local samples, then global samples.
pub fn sample_tuples(
    means: &Tensor,
    dims: &[usize],
    cfg: &SamplingConfig,
    rng: &mut impl Rng,
) -> IntTuples {
    let r = dims.len();
    let k = means.len() / r;
    let mut out = IntTuples::with_capacity(r, k * cfg.per_tuple(r));
    for d in means.data().chunks(r) {
        nearest_corners(d, dims, &mut out);
        sample_local(d, &cfg.region, dims, cfg.local, rng, &mut out);
        sample_global(dims, cfg.global, rng, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn corners(d: &[f64], dims: &[usize]) -> Vec<Vec<usize>> {
        let mut out = IntTuples::new(d.len());
        nearest_corners(d, dims, &mut out);
        out.rows().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn map_tuple_examples() {
        assert_eq!(map_tuple(&[0.0, 0.0], &[8, 8]), vec![4.0, 4.0]);
        assert_abs_diff_eq!(map_tuple(&[1.0], &[8])[0], 5.848468629040039, epsilon = 1e-12);
        let low = map_tuple(&[-30.0, -30.0], &[8, 8]);
        assert!(low.iter().all(|&x| x > 0.0 && x < 1e-11));
    }

    #[test]
    fn expand_sigma_examples() {
        let s = expand_sigma_row(0.0, &[10, 10], 0.1);
        assert_abs_diff_eq!(s[0], 2.1269280110429727 + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 2.2269280110429727, epsilon = 1e-12);
        let s = expand_sigma_row(-2.0, &[10, 10], 0.1);
        assert_abs_diff_eq!(s[0], std::f64::consts::LN_2 + 0.1, epsilon = 1e-12);
        let s = expand_sigma_row(-1e4, &[10, 10], 0.1);
        assert_abs_diff_eq!(s[0], 0.1, epsilon = 1e-15);
        assert!(s[0] >= 0.1);
    }

    #[test]
    fn corner_examples() {
        assert_eq!(
            corners(&[1.3, 2.7], &[8, 8]),
            vec![vec![1, 2], vec![1, 3], vec![2, 2], vec![2, 3]]
        );
        assert_eq!(
            corners(&[0.2, 0.2], &[8, 8]),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        let c = corners(&[7.9, 7.9], &[8, 8]);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|t| t == &vec![7, 7]));
    }

    #[test]
    fn local_box_membership_and_alignment() {
        let mut r = rng::stream(1, 0);
        let mut out = IntTuples::new(2);
        sample_local(&[4.2, 4.0], &[3, 3], &[8, 8], 500, &mut r, &mut out);
        assert!(out.rows().all(|t| (3..=5).contains(&t[0]) && (3..=5).contains(&t[1])));
        let mut out = IntTuples::new(2);
        sample_local(&[0.1, 0.1], &[3, 3], &[8, 8], 500, &mut r, &mut out);
        assert!(out.rows().all(|t| t[0] <= 2 && t[1] <= 2));
        // both box edges are hit
        assert!(out.rows().any(|t| t[0] == 0) && out.rows().any(|t| t[0] == 2));
        let mut out = IntTuples::new(2);
        sample_local(&[7.9, 7.9], &[4, 4], &[8, 8], 200, &mut r, &mut out);
        assert!(out.rows().all(|t| t[0] >= 4 && t[1] >= 4));
        let mut out = IntTuples::new(2);
        sample_local(&[4.0, 4.0], &[3, 3], &[8, 8], 0, &mut r, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn global_samples_are_uniform() {
        let mut r = rng::stream(2, 0);
        let mut out = IntTuples::new(2);
        sample_global(&[2, 2], 10_000, &mut r, &mut out);
        let mut counts = [0usize; 4];
        for t in out.rows() {
            counts[t[0] * 2 + t[1]] += 1;
        }
        // chi-square with 3 dof; 16.27 is the 0.1% critical value
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0)
            .sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
        let mut out = IntTuples::new(3);
        sample_global(&[3, 1, 5], 0, &mut r, &mut out);
        assert!(out.is_empty());
        sample_global(&[3, 1, 5], 1000, &mut r, &mut out);
        assert!(out.in_bounds(&[3, 1, 5]));
    }

    #[test]
    fn sample_tuples_layout() {
        let mut r = rng::stream(3, 0);
        let means = Tensor::new(vec![3, 2], vec![1.5, 1.5, 4.0, 2.0, 7.0, 0.5]).unwrap();
        let cfg = SamplingConfig::new(2, 3, vec![3, 3]);
        let t = sample_tuples(&means, &[8, 8], &cfg, &mut r);
        assert_eq!(t.len(), 3 * (4 + 2 + 3));
        assert!(t.in_bounds(&[8, 8]));
    }
}
