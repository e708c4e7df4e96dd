//! Exact Euclidean k-nearest neighbours by blocked exhaustive scan.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Query rows scanned together against each fitted row.
const BLOCK: usize = 64;

/// `k` neighbours per point, ascending by distance, ties by lower index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<u32>,
    distances: Vec<f64>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// The `k` nearest of each row's neighbours; identical to recomputing
    /// with the smaller `k` because rows are kept fully sorted.
    pub fn truncate(&self, k: usize) -> Result<NeighborGraph> {
        if k == 0 || k > self.k {
            return Err(Error::Parameter(format!(
                "cannot truncate a {}-NN graph to k = {k}",
                self.k
            )));
        }
        let n = self.len();
        let mut indices = Vec::with_capacity(n * k);
        let mut distances = Vec::with_capacity(n * k);
        for i in 0..n {
            indices.extend_from_slice(&self.indices(i)[..k]);
            distances.extend_from_slice(&self.distances(i)[..k]);
        }
        Ok(NeighborGraph { k, indices, distances })
    }

    /// Concatenates graphs computed over consecutive query ranges.
    pub fn concat(parts: Vec<NeighborGraph>) -> Result<NeighborGraph> {
        let k = parts.first().map_or(0, |p| p.k);
        let mut indices = Vec::new();
        let mut distances = Vec::new();
        for p in parts {
            if p.k != k {
                return Err(Error::Parameter("neighbour graphs differ in k".into()));
            }
            indices.extend(p.indices);
            distances.extend(p.distances);
        }
        Ok(NeighborGraph { k, indices, distances })
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

/// Exact `k` nearest neighbours of every row among the other rows.
pub fn knn(matrix: &Matrix, k: usize) -> Result<NeighborGraph> {
    if k == 0 || k >= matrix.rows() {
        return Err(Error::Parameter(format!(
            "k = {k} must satisfy 1 <= k < {} rows",
            matrix.rows()
        )));
    }
    knn_range(matrix, matrix, 0..matrix.rows(), k, true)
}

/// Exact `k` nearest fitted rows for each query row.
pub fn knn_query(queries: &Matrix, fitted: &Matrix, k: usize) -> Result<NeighborGraph> {
    if queries.rows() > 0 && queries.cols() != fitted.cols() {
        return Err(Error::Dimension {
            expected: fitted.cols(),
            found: queries.cols(),
        });
    }
    if k == 0 || k > fitted.rows() {
        return Err(Error::Parameter(format!(
            "k = {k} must satisfy 1 <= k <= {} fitted rows",
            fitted.rows()
        )));
    }
    knn_range(queries, fitted, 0..queries.rows(), k, false)
}

/// Neighbour lists for the query rows in `range`. With `exclude_self`,
/// `queries` and `fitted` are the same matrix and row `i` skips itself.
/// Exposed so callers can split the scan across threads.
pub fn knn_range(
    queries: &Matrix,
    fitted: &Matrix,
    range: Range<usize>,
    k: usize,
    exclude_self: bool,
) -> Result<NeighborGraph> {
    if fitted.rows() > u32::MAX as usize {
        return Err(Error::Parameter("too many fitted rows".into()));
    }
    let mut indices = Vec::with_capacity(range.len() * k);
    let mut distances = Vec::with_capacity(range.len() * k);
    let mut start = range.start;
    while start < range.end {
        let end = (start + BLOCK).min(range.end);
        let mut heaps: Vec<BinaryHeap<Candidate>> =
            (start..end).map(|_| BinaryHeap::with_capacity(k + 1)).collect();
        for j in 0..fitted.rows() {
            let f = fitted.row(j);
            for (q, heap) in (start..end).zip(heaps.iter_mut()) {
                if exclude_self && q == j {
                    continue;
                }
                let cand = Candidate {
                    d2: squared_distance(queries.row(q), f),
                    index: j as u32,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if let Some(top) = heap.peek() {
                    if cand < *top {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
        }
        for heap in heaps {
            for c in heap.into_sorted_vec() {
                indices.push(c.index);
                distances.push(c.d2.sqrt());
            }
        }
        start = end;
    }
    Ok(NeighborGraph { k, indices, distances })
}
