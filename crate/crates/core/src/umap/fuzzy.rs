use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::neighbors::NeighborGraph;

/// Residual tolerance of the bandwidth equation.
pub const SMOOTH_KNN_TOLERANCE: f64 = 1e-5;
const SIGMA_FLOOR_SCALE: f64 = 1e-3;
const SIGMA_CEIL_SCALE: f64 = 1e3;
const MAX_BISECTIONS: usize = 200;

/// Local connectivity and bandwidth of one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothKnn {
    pub rho: f64,
    pub sigma: f64,
    /// Set when sigma sits on a clamp bound and the equation is not solved.
    pub clamped: bool,
}

impl SmoothKnn {
    #[inline]
    pub fn membership(&self, distance: f64) -> f64 {
        (-((distance - self.rho).max(0.0)) / self.sigma).exp()
    }

    pub fn residual(&self, distances: &[f64]) -> f64 {
        let target = (distances.len() as f64).log2();
        distances.iter().map(|&d| self.membership(d)).sum::<f64>() - target
    }
}

/// Solves `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)` for sigma.
///
/// `rho` is the smallest positive distance. Sigma is bracketed by
/// `[1e-3, 1e3] * mean(d)` and found by bisection.
pub fn smooth_knn(distances: &[f64]) -> SmoothKnn {
    let k = distances.len();
    let rho = distances.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let mean = if k == 0 { 0.0 } else { distances.iter().sum::<f64>() / k as f64 };
    if mean <= 0.0 || k < 2 {
        if k >= 2 {
            log::warn!("all neighbour distances are zero; bandwidth set to floor");
        }
        let sigma = if mean > 0.0 { SIGMA_FLOOR_SCALE * mean } else { SIGMA_FLOOR_SCALE };
        return SmoothKnn {
            rho,
            sigma,
            clamped: true,
        };
    }
    let target = (k as f64).log2();
    let excess = |sigma: f64| -> f64 {
        distances
            .iter()
            .map(|&d| (-((d - rho).max(0.0)) / sigma).exp())
            .sum::<f64>()
            - target
    };
    let mut lo = SIGMA_FLOOR_SCALE * mean;
    let mut hi = SIGMA_CEIL_SCALE * mean;
    let at_lo = excess(lo);
    if at_lo >= -SMOOTH_KNN_TOLERANCE {
        let clamped = at_lo.abs() > SMOOTH_KNN_TOLERANCE;
        if clamped {
            log::warn!("bandwidth equation infeasible; sigma clamped to floor");
        }
        return SmoothKnn { rho, sigma: lo, clamped };
    }
    let at_hi = excess(hi);
    if at_hi <= SMOOTH_KNN_TOLERANCE {
        let clamped = at_hi.abs() > SMOOTH_KNN_TOLERANCE;
        if clamped {
            log::warn!("bandwidth equation infeasible; sigma clamped to ceiling");
        }
        return SmoothKnn { rho, sigma: hi, clamped };
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        let r = excess(mid);
        if r.abs() < 0.1 * SMOOTH_KNN_TOLERANCE || mid <= lo || mid >= hi {
            break;
        }
        if r > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SmoothKnn {
        rho,
        sigma: mid,
        clamped: false,
    }
}

/// Probabilistic t-conorm used to merge the two directed memberships.
#[inline]
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub weight: f64,
}

/// Symmetric membership graph plus the per-point calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Sorted by `(u, v)`, unique, weights in `(0, 1]`.
    pub edges: Vec<Edge>,
    pub calibration: Vec<SmoothKnn>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (u, v) = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.edges
            .binary_search_by(|e| (e.u, e.v).cmp(&(u, v)))
            .map(|p| self.edges[p].weight)
            .unwrap_or(0.0)
    }
}

pub fn fuzzy_graph(neighbors: &NeighborGraph) -> FuzzyGraph {
    let n = neighbors.len();
    let calibration: Vec<SmoothKnn> = (0..n).map(|i| smooth_knn(neighbors.distances(i))).collect();
    // directed entries keyed by unordered pair, flagged by direction
    let mut directed: Vec<(u32, u32, bool, f64)> = Vec::with_capacity(n * neighbors.k());
    for (i, cal) in calibration.iter().enumerate() {
        for (&j, &d) in neighbors.indices(i).iter().zip(neighbors.distances(i)) {
            let w = cal.membership(d);
            if w <= 0.0 || j as usize == i {
                continue;
            }
            let i32_ = i as u32;
            if i32_ < j {
                directed.push((i32_, j, true, w));
            } else {
                directed.push((j, i32_, false, w));
            }
        }
    }
    directed.sort_by_key(|a| (a.0, a.1, a.2));
    let mut edges: Vec<Edge> = Vec::with_capacity(directed.len());
    let mut p = 0;
    while p < directed.len() {
        let (u, v, _, w) = directed[p];
        let mut weight = w;
        if p + 1 < directed.len() && directed[p + 1].0 == u && directed[p + 1].1 == v {
            weight = fuzzy_union(w, directed[p + 1].3);
            p += 1;
        }
        p += 1;
        edges.push(Edge { u, v, weight: weight.min(1.0) });
    }
    FuzzyGraph { n, edges, calibration }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::neighbors::knn;
    use crate::rng::rng_from;
    use rand::Rng as _;

    #[test]
    fn closed_form_bandwidth() {
        let s = smooth_knn(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(s.rho, 1.0);
        let expected = -1.0 / (2f64.sqrt() - 1.0).ln();
        assert!((s.sigma - expected).abs() < 1e-4, "{}", s.sigma);
        assert!((expected - 1.1346).abs() < 1e-4);
        assert!(!s.clamped);
        assert!(s.residual(&[1.0, 2.0, 2.0, 3.0]).abs() <= SMOOTH_KNN_TOLERANCE);
    }

    #[test]
    fn duplicate_distances_hit_floor() {
        let s = smooth_knn(&[1.0, 1.0]);
        assert_eq!(s.rho, 1.0);
        assert!(s.clamped);
        assert_eq!(s.sigma, 1e-3);
    }

    #[test]
    fn zero_distances_are_flagged() {
        let s = smooth_knn(&[0.0, 0.0, 0.0]);
        assert!(s.clamped);
        assert!(s.sigma > 0.0);
        assert_eq!(s.membership(0.0), 1.0);
    }

    #[test]
    fn t_conorm() {
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
        assert_eq!(fuzzy_union(1.0, 0.0), 1.0);
    }

    #[test]
    fn graph_invariants_on_random_data() {
        let mut rng = rng_from(4);
        let data: Vec<f64> = (0..300 * 5).map(|_| rng.random_range(0.0..1.0)).collect();
        let m = Matrix::from_vec(300, 5, data).unwrap();
        let nn = knn(&m, 15).unwrap();
        let g = fuzzy_graph(&nn);
        for (i, cal) in g.calibration.iter().enumerate() {
            assert!(!cal.clamped);
            assert!(cal.residual(nn.distances(i)).abs() <= SMOOTH_KNN_TOLERANCE);
            // nearest neighbour has membership exactly one
            assert_eq!(cal.membership(nn.distances(i)[0]), 1.0);
        }
        assert!(g.edges.windows(2).all(|w| (w[0].u, w[0].v) < (w[1].u, w[1].v)));
        for e in &g.edges {
            assert!(e.u < e.v);
            assert!(e.weight > 0.0 && e.weight <= 1.0);
        }
        // symmetric lookup and union of directed weights
        for i in 0..20 {
            for (&j, &d) in nn.indices(i).iter().zip(nn.distances(i)) {
                let j = j as usize;
                let wij = g.calibration[i].membership(d);
                let wji = nn
                    .indices(j)
                    .iter()
                    .position(|&x| x as usize == i)
                    .map_or(0.0, |p| g.calibration[j].membership(nn.distances(j)[p]));
                let expected = fuzzy_union(wij, wji);
                assert!((g.weight(i, j) - expected).abs() < 1e-15);
                assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }
}
