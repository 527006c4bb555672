//! Duplicate detection for integer tuples via the Cantor tuple function.

use super::IntTuples;
use crate::error::{Error, Result};

/// `u(a, b) = (a + b)(a + b + 1) / 2 + b`, or `None` on overflow.
pub fn cantor_pair(a: u128, b: u128) -> Option<u128> {
    let s = a.checked_add(b)?;
    let prod = if s % 2 == 0 {
        (s / 2).checked_mul(s.checked_add(1)?)?
    } else {
        s.checked_mul((s + 1) / 2)?
    };
    prod.checked_add(b)
}

/// Nested pairing `u(d1, u(d2, ..., dr))`; a single element encodes to itself.
pub fn cantor_tuple(tuple: &[usize]) -> Result<u128> {
    let overflow = || Error::CantorOverflow(tuple.to_vec());
    let (&last, rest) = tuple.split_last().ok_or_else(overflow)?;
    rest.iter()
        .rev()
        .try_fold(last as u128, |acc, &d| cantor_pair(d as u128, acc))
        .ok_or_else(overflow)
}

fn mask_range(tuples: &IntTuples, range: std::ops::Range<usize>, mask: &mut [bool]) -> Result<()> {
    let mut coded: Vec<(u128, usize)> = range
        .map(|i| cantor_tuple(tuples.row(i)).map(|c| (c, i)))
        .collect::<Result<_>>()?;
    // ties resolved by original position, so the earliest row survives
    coded.sort_unstable();
    for w in coded.windows(2) {
        if w[0].0 == w[1].0 {
            mask[w[1].1] = false;
        }
    }
    Ok(())
}

/// `true` for the first occurrence of every tuple, `false` for repeats.
pub fn mask_duplicates(tuples: &IntTuples) -> Result<Vec<bool>> {
    let mut mask = vec![true; tuples.len()];
    mask_range(tuples, 0..tuples.len(), &mut mask)?;
    Ok(mask)
}

/// Like [`mask_duplicates`], but duplicates only count within consecutive
/// blocks of `block` rows.
pub fn mask_duplicates_blocked(tuples: &IntTuples, block: usize) -> Result<Vec<bool>> {
    let mut mask = vec![true; tuples.len()];
    let mut start = 0;
    while start < tuples.len() {
        let end = (start + block).min(tuples.len());
        mask_range(tuples, start..end, &mut mask)?;
        start = end;
    }
    Ok(mask)
}
