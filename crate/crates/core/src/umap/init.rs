//! Initial layouts: spectral embedding of the normalised graph Laplacian,
//! laid out per connected component, with a random Gaussian fallback.

use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{leading_eigenpairs, symmetric_eigen};
use crate::matrix::{squared_distance, Matrix};
use crate::rng::Rng;

use super::fuzzy::FuzzyGraph;

const SPECTRAL_MAX_ITER: usize = 300;
const SPECTRAL_TOL: f64 = 1e-4;

/// Compressed adjacency with both directions of every edge.
struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn from_graph(graph: &FuzzyGraph) -> Self {
        let n = graph.n;
        let mut degree = vec![0usize; n];
        for e in &graph.edges {
            degree[e.u as usize] += 1;
            degree[e.v as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        for e in &graph.edges {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                let p = fill[a as usize];
                targets[p] = b;
                weights[p] = e.weight;
                fill[a as usize] += 1;
            }
        }
        Self {
            offsets,
            targets,
            weights,
        }
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }
}

/// Connected components, labelled in order of their smallest member.
pub fn connected_components(graph: &FuzzyGraph) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..graph.n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &graph.edges {
        let (a, b) = (find(&mut parent, e.u as usize), find(&mut parent, e.v as usize));
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
    }
    let mut label = vec![usize::MAX; graph.n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for i in 0..graph.n {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[label[r]].push(i);
    }
    comps
}

/// Two non-trivial leading eigenvectors of `D^-1/2 W D^-1/2` restricted to
/// one connected component, or `None` when the solver fails.
fn spectral_component(
    adj: &Adjacency,
    members: &[usize],
    local: &mut [usize],
    rng: &mut Rng,
) -> Option<Vec<[f64; 2]>> {
    let m = members.len();
    if m < 4 {
        return None;
    }
    for (li, &g) in members.iter().enumerate() {
        local[g] = li;
    }
    let degree: Vec<f64> = members.iter().map(|&g| adj.neighbors(g).map(|(_, w)| w).sum()).collect();
    if degree.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let total: f64 = degree.iter().sum();
    let trivial: Vec<f64> = degree.iter().map(|d| (d / total).sqrt()).collect();
    // (I + D^-1/2 W D^-1/2) / 2 has spectrum in [0, 1] with the same order
    let local = &*local;
    let apply = |x: &[f64], y: &mut [f64]| {
        for (li, &g) in members.iter().enumerate() {
            let mut acc = 0.0;
            for (t, w) in adj.neighbors(g) {
                let lt = local[t];
                acc += w * inv_sqrt[lt] * x[lt];
            }
            y[li] = 0.5 * (x[li] + inv_sqrt[li] * acc);
        }
    };
    let oversample = 4.min(m.saturating_sub(3));
    let lead = leading_eigenpairs(
        apply,
        m,
        2,
        oversample,
        &[trivial],
        SPECTRAL_MAX_ITER,
        SPECTRAL_TOL,
        rng,
    )
    .ok()?;
    if !lead.converged {
        log::debug!("spectral initialisation stopped after {} iterations", lead.iterations);
    }
    Some(
        (0..m)
            .map(|i| [lead.vectors[0][i], lead.vectors[1][i]])
            .collect(),
    )
}

fn max_abs(coords: &[[f64; 2]]) -> f64 {
    coords
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Positions for component centres: axis points for up to four components,
/// otherwise the top-two principal projection of component centroids.
fn meta_layout(data: &Matrix, comps: &[Vec<usize>]) -> Vec<[f64; 2]> {
    let c = comps.len();
    if c <= 4 {
        let axes = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        return axes[..c].to_vec();
    }
    let dim = data.cols();
    let mut centroids = Matrix::zeros(c, dim);
    for (ci, members) in comps.iter().enumerate() {
        let row = centroids.row_mut(ci);
        for &i in members {
            for (r, v) in row.iter_mut().zip(data.row(i)) {
                *r += v;
            }
        }
        for r in row.iter_mut() {
            *r /= members.len() as f64;
        }
    }
    let mut gram = Matrix::zeros(c, c);
    let mean: Vec<f64> = (0..dim)
        .map(|j| (0..c).map(|i| centroids.get(i, j)).sum::<f64>() / c as f64)
        .collect();
    for i in 0..c {
        for j in 0..=i {
            let v: f64 = (0..dim)
                .map(|k| (centroids.get(i, k) - mean[k]) * (centroids.get(j, k) - mean[k]))
                .sum();
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let layout: Option<Vec<[f64; 2]>> = symmetric_eigen(&gram).ok().map(|eig| {
        let s0 = eig.values[0].max(0.0).sqrt();
        let s1 = eig.values.get(1).copied().unwrap_or(0.0).max(0.0).sqrt();
        (0..c)
            .map(|i| [eig.vectors.get(i, 0) * s0, eig.vectors.get(i, 1.min(c - 1)) * s1])
            .collect()
    });
    match layout {
        Some(l) if max_abs(&l) > 0.0 && l.iter().all(|p| p[0].is_finite() && p[1].is_finite()) => {
            let s = max_abs(&l);
            l.into_iter().map(|p| [p[0] / s, p[1] / s]).collect()
        }
        _ => (0..c)
            .map(|i| {
                let t = core::f64::consts::TAU * i as f64 / c as f64;
                [t.cos(), t.sin()]
            })
            .collect(),
    }
}

pub fn random_layout(n: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)])
        .collect()
}

/// Spectral layout of every component, placed around meta positions.
/// Returns `None` if no usable spectral embedding could be computed.
pub fn spectral_layout(data: &Matrix, graph: &FuzzyGraph, rng: &mut Rng) -> Option<Vec<[f64; 2]>> {
    let adj = Adjacency::from_graph(graph);
    let comps = connected_components(graph);
    // global -> component-local index, rewritten per component
    let mut local = vec![usize::MAX; graph.n];
    if comps.len() == 1 {
        let coords = spectral_component(&adj, &comps[0], &mut local, rng)?;
        return coords.iter().all(|c| c[0].is_finite() && c[1].is_finite()).then_some(coords);
    }
    let meta = meta_layout(data, &comps);
    let mut out = vec![[0.0; 2]; graph.n];
    for (ci, members) in comps.iter().enumerate() {
        let radius = meta
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ci)
            .map(|(_, p)| squared_distance(p, &meta[ci]).sqrt())
            .fold(f64::INFINITY, f64::min)
            / 2.0;
        let radius = if radius.is_finite() && radius > 0.0 { radius } else { 1.0 };
        let placed = spectral_component(&adj, members, &mut local, rng)
            .filter(|c| max_abs(c) > 0.0 && c.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        match placed {
            Some(coords) => {
                let s = radius / max_abs(&coords);
                for (&g, c) in members.iter().zip(&coords) {
                    out[g] = [meta[ci][0] + c[0] * s, meta[ci][1] + c[1] * s];
                }
            }
            None => {
                for &g in members {
                    let u: f64 = rand::Rng::random_range(rng, -1.0..1.0);
                    let v: f64 = rand::Rng::random_range(rng, -1.0..1.0);
                    out[g] = [meta[ci][0] + u * radius, meta[ci][1] + v * radius];
                }
            }
        }
    }
    Some(out)
}

/// Scales to max-abs 10, jitters, then maps each axis onto `[0, 10]`.
pub fn normalize_layout(coords: &mut [[f64; 2]], rng: &mut Rng) {
    let m = max_abs(coords);
    let expansion = if m > 0.0 { 10.0 / m } else { 1.0 };
    for c in coords.iter_mut() {
        for v in c.iter_mut() {
            let jitter: f64 = StandardNormal.sample(rng);
            *v = *v * expansion + 1e-4 * jitter;
        }
    }
    for axis in 0..2 {
        let lo = coords.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
        let hi = coords.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span > 0.0 {
            for c in coords.iter_mut() {
                c[axis] = 10.0 * (c[axis] - lo) / span;
            }
        }
    }
}
