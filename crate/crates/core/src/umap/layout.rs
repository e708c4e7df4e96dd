//! Edge-sampled stochastic gradient descent on the cross-entropy between the
//! fuzzy graph and the low-dimensional similarity curve.

use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::fuzzy::FuzzyGraph;

/// Per-coordinate bound on a single gradient step.
pub const GRADIENT_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub a: f64,
    pub b: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    pub repulsion: f64,
}

#[inline]
pub fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Coefficient of `(x_i - x_j)` in the attractive gradient of log psi.
#[inline]
pub fn attractive_coeff(a: f64, b: f64, d2: f64) -> f64 {
    if d2 > 0.0 {
        let pb = d2.powf(b);
        -2.0 * a * b * (pb / d2) / (a * pb + 1.0)
    } else {
        0.0
    }
}

/// Coefficient of `(x_i - x_j)` in the repulsive gradient of log(1 - psi).
#[inline]
pub fn repulsive_coeff(a: f64, b: f64, repulsion: f64, d2: f64) -> f64 {
    if d2 > 0.0 {
        2.0 * repulsion * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
    } else {
        0.0
    }
}

#[inline]
fn d2(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    dx * dx + dy * dy
}

/// Directed sampling schedule: every undirected edge appears once per
/// endpoint, sampled every `max_w / w` epochs.
#[derive(Debug, Clone)]
pub struct EdgeSchedule {
    pub heads: Vec<u32>,
    pub tails: Vec<u32>,
    pub epochs_per_sample: Vec<f64>,
}

impl EdgeSchedule {
    pub fn from_graph(graph: &FuzzyGraph, epochs: usize) -> Self {
        let max_w = graph.edges.iter().map(|e| e.weight).fold(0.0, f64::max);
        let cutoff = max_w / epochs as f64;
        let mut directed: Vec<(u32, u32, f64)> = Vec::with_capacity(graph.edges.len() * 2);
        for e in graph.edges.iter().filter(|e| e.weight >= cutoff) {
            directed.push((e.u, e.v, e.weight));
            directed.push((e.v, e.u, e.weight));
        }
        directed.sort_by_key(|x| (x.0, x.1));
        Self {
            heads: directed.iter().map(|d| d.0).collect(),
            tails: directed.iter().map(|d| d.1).collect(),
            epochs_per_sample: directed.iter().map(|d| max_w / d.2).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Learning rate used during epoch `epoch`, decaying linearly to zero.
#[inline]
pub fn learning_rate_at(initial: f64, epoch: usize, epochs: usize) -> f64 {
    initial * (1.0 - epoch as f64 / epochs as f64)
}

/// Optimises `coords` in place, moving both endpoints of sampled edges.
pub fn optimize_layout(
    coords: &mut [[f64; 2]],
    schedule: &EdgeSchedule,
    cfg: &LayoutConfig,
    rng: &mut Rng,
) -> Result<()> {
    let n = coords.len();
    let m = schedule.len();
    let neg_rate = cfg.negative_sample_rate.max(1) as f64;
    let mut next_sample: Vec<f64> = schedule.epochs_per_sample.clone();
    let eps_negative: Vec<f64> = schedule.epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_negative: Vec<f64> = eps_negative.clone();
    for epoch in 0..cfg.epochs {
        let alpha = learning_rate_at(cfg.learning_rate, epoch, cfg.epochs);
        let now = epoch as f64;
        for e in 0..m {
            if next_sample[e] > now {
                continue;
            }
            let j = schedule.heads[e] as usize;
            let k = schedule.tails[e] as usize;
            let mut current = coords[j];
            let other = coords[k];
            let coeff = attractive_coeff(cfg.a, cfg.b, d2(&current, &other));
            for d in 0..2 {
                let g = clip(coeff * (current[d] - other[d])) * alpha;
                current[d] += g;
                coords[k][d] -= g;
            }
            next_sample[e] += schedule.epochs_per_sample[e];

            let n_neg = if cfg.negative_sample_rate == 0 {
                0
            } else {
                ((now - next_negative[e]) / eps_negative[e]).floor().max(0.0) as usize
            };
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == j {
                    continue;
                }
                let other = coords[k];
                let coeff = repulsive_coeff(cfg.a, cfg.b, cfg.repulsion, d2(&current, &other));
                if coeff > 0.0 {
                    for d in 0..2 {
                        current[d] += clip(coeff * (current[d] - other[d])) * alpha;
                    }
                }
            }
            next_negative[e] += n_neg as f64 * eps_negative[e];
            coords[j] = current;
        }
        if coords.iter().any(|c| !(c[0].is_finite() && c[1].is_finite())) {
            return Err(Error::NonFinite { epoch });
        }
    }
    Ok(())
}

/// Refines one new point against a frozen reference layout.
///
/// `edges` pairs reference indices with membership weights in `(0, 1]`.
pub fn refine_point(
    point: &mut [f64; 2],
    edges: &[(u32, f64)],
    reference: &[[f64; 2]],
    cfg: &LayoutConfig,
    rng: &mut Rng,
) -> Result<()> {
    if cfg.epochs == 0 || edges.is_empty() || reference.is_empty() {
        return Ok(());
    }
    let n = reference.len();
    let max_w = edges.iter().map(|e| e.1).fold(0.0, f64::max);
    let cutoff = max_w / cfg.epochs as f64;
    let live: Vec<(usize, f64)> = edges
        .iter()
        .filter(|e| e.1 >= cutoff && e.1 > 0.0)
        .map(|&(j, w)| (j as usize, max_w / w))
        .collect();
    let neg_rate = cfg.negative_sample_rate.max(1) as f64;
    let mut next_sample: Vec<f64> = live.iter().map(|e| e.1).collect();
    let mut next_negative: Vec<f64> = live.iter().map(|e| e.1 / neg_rate).collect();
    for epoch in 0..cfg.epochs {
        let alpha = learning_rate_at(cfg.learning_rate, epoch, cfg.epochs);
        let now = epoch as f64;
        for (e, &(k, eps)) in live.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let other = reference[k];
            let coeff = attractive_coeff(cfg.a, cfg.b, d2(point, &other));
            for d in 0..2 {
                point[d] += clip(coeff * (point[d] - other[d])) * alpha;
            }
            next_sample[e] += eps;
            if cfg.negative_sample_rate == 0 {
                continue;
            }
            let eps_neg = eps / neg_rate;
            let n_neg = ((now - next_negative[e]) / eps_neg).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = reference[rng.random_range(0..n)];
                let coeff = repulsive_coeff(cfg.a, cfg.b, cfg.repulsion, d2(point, &other));
                if coeff > 0.0 {
                    for d in 0..2 {
                        point[d] += clip(coeff * (point[d] - other[d])) * alpha;
                    }
                }
            }
            next_negative[e] += n_neg as f64 * eps_neg;
        }
        if !(point[0].is_finite() && point[1].is_finite()) {
            return Err(Error::NonFinite { epoch });
        }
    }
    Ok(())
}
