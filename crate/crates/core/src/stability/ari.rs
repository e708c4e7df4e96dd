use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Cross-tabulation of two labelings of the same points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    /// `(row label index, column label index) -> count`, non-zero cells only.
    pub cells: BTreeMap<(usize, usize), u64>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

fn dense_labels<L: Ord + Copy>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<L, usize> = BTreeMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

impl Contingency {
    pub fn new<L: Ord + Copy>(a: &[L], b: &[L]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let (da, na) = dense_labels(a);
        let (db, nb) = dense_labels(b);
        let mut cells = BTreeMap::new();
        let mut row_sums = alloc::vec![0u64; na];
        let mut col_sums = alloc::vec![0u64; nb];
        for (&i, &j) in da.iter().zip(&db) {
            *cells.entry((i, j)).or_insert(0) += 1;
            row_sums[i] += 1;
            col_sums[j] += 1;
        }
        Ok(Self {
            cells,
            row_sums,
            col_sums,
            total: a.len() as u64,
        })
    }
}

#[inline]
fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand index. When the expected and maximum indices coincide
/// (both sides all singletons or both a single cluster) the result is 1 for
/// identical set partitions and 0 otherwise.
pub fn ari<L: Ord + Copy>(a: &[L], b: &[L]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.total == 0 {
        return Err(Error::Parameter("adjusted Rand index of empty labelings".into()));
    }
    let index: u128 = c.cells.values().map(|&v| pairs(v)).sum();
    let sa: u128 = c.row_sums.iter().map(|&v| pairs(v)).sum();
    let sb: u128 = c.col_sums.iter().map(|&v| pairs(v)).sum();
    let total = pairs(c.total);
    // scaled by 2 * C(n, 2) to stay in integers:
    // (index - sa*sb/total) / ((sa+sb)/2 - sa*sb/total)
    let num = 2 * (index * total) as i128 - 2 * (sa * sb) as i128;
    let den = ((sa + sb) * total) as i128 - 2 * (sa * sb) as i128;
    if den == 0 {
        let identical = c.cells.len() == c.row_sums.len() && c.cells.len() == c.col_sums.len();
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

/// Mean ARI over all unordered pairs of distinct labelings.
pub fn mean_pairwise_ari<L: Ord + Copy>(labelings: &[&[L]]) -> Result<f64> {
    if labelings.len() < 2 {
        return Err(Error::Parameter("need at least two labelings".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..labelings.len() {
        for j in i + 1..labelings.len() {
            sum += ari(labelings[i], labelings[j])?;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}
