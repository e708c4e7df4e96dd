//! Thread-parallel versions of the sweep's hot paths.
//!
//! The sweep splits into independent (fold, reducer) tasks whose seeds do not
//! depend on scheduling, so running them on a pool gives the same report as
//! the sequential sweep. Only [`hogwild_layout`] trades that away.

use std::sync::atomic::{AtomicU64, Ordering};

use phenomap_core::dataset::{SplitPlan, Table};
use phenomap_core::matrix::Matrix;
use phenomap_core::neighbors::{knn_range, NeighborGraph};
use phenomap_core::rng::{rng_from, Rng};
use phenomap_core::stability::{
    assemble, fit_reducer, fit_reducer_with, prepare_fold, test_truth, FoldData, ReducerFit, SweepGrid, SweepOutcome,
};
use phenomap_core::umap::{attractive_coeff, clip, learning_rate_at, repulsive_coeff, EdgeSchedule, LayoutConfig};
use phenomap_core::{Error, Result};
use rand::Rng as _;
use rayon::prelude::*;

const KNN_CHUNK: usize = 256;

/// Exact neighbours with the query rows split across the current pool.
/// The result does not depend on the thread count.
pub fn parallel_knn(matrix: &Matrix, k: usize) -> Result<NeighborGraph> {
    if k == 0 || k >= matrix.rows() {
        return Err(Error::Parameter(format!(
            "k = {k} must lie in 1..{} for {} rows",
            matrix.rows(),
            matrix.rows()
        )));
    }
    let ranges: Vec<_> = (0..matrix.rows())
        .step_by(KNN_CHUNK)
        .map(|s| s..(s + KNN_CHUNK).min(matrix.rows()))
        .collect();
    let parts = ranges
        .into_par_iter()
        .map(|r| knn_range(matrix, matrix, r, k, true))
        .collect::<Result<Vec<_>>>()?;
    NeighborGraph::concat(parts)
}

struct SharedCoords(Vec<[AtomicU64; 2]>);

impl SharedCoords {
    fn new(coords: &[[f64; 2]]) -> Self {
        Self(
            coords
                .iter()
                .map(|c| [AtomicU64::new(c[0].to_bits()), AtomicU64::new(c[1].to_bits())])
                .collect(),
        )
    }

    #[inline]
    fn get(&self, i: usize) -> [f64; 2] {
        let c = &self.0[i];
        [
            f64::from_bits(c[0].load(Ordering::Relaxed)),
            f64::from_bits(c[1].load(Ordering::Relaxed)),
        ]
    }

    #[inline]
    fn set(&self, i: usize, v: [f64; 2]) {
        self.0[i][0].store(v[0].to_bits(), Ordering::Relaxed);
        self.0[i][1].store(v[1].to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn add(&self, i: usize, d: [f64; 2]) {
        let v = self.get(i);
        self.set(i, [v[0] + d[0], v[1] + d[1]]);
    }
}

struct Chunk {
    edges: std::ops::Range<usize>,
    next_sample: Vec<f64>,
    next_negative: Vec<f64>,
    rng: Rng,
}

/// Layout SGD with the edge list split across the pool and unsynchronised
/// reads and writes of the shared coordinates. Results depend on thread
/// count and scheduling.
pub fn hogwild_layout(coords: &mut [[f64; 2]], schedule: &EdgeSchedule, cfg: &LayoutConfig, rng: &mut Rng) -> Result<()> {
    let n = coords.len();
    let m = schedule.len();
    let threads = rayon::current_num_threads().max(1);
    let per = m.div_ceil(threads).max(1);
    let neg_rate = cfg.negative_sample_rate.max(1) as f64;
    let mut chunks: Vec<Chunk> = (0..m)
        .step_by(per)
        .map(|s| {
            let edges = s..(s + per).min(m);
            Chunk {
                next_sample: schedule.epochs_per_sample[edges.clone()].to_vec(),
                next_negative: schedule.epochs_per_sample[edges.clone()].iter().map(|e| e / neg_rate).collect(),
                rng: rng_from(rng.random()),
                edges,
            }
        })
        .collect();
    let shared = SharedCoords::new(coords);
    for epoch in 0..cfg.epochs {
        let alpha = learning_rate_at(cfg.learning_rate, epoch, cfg.epochs);
        let now = epoch as f64;
        chunks.par_iter_mut().for_each(|chunk| {
            for (local, e) in chunk.edges.clone().enumerate() {
                if chunk.next_sample[local] > now {
                    continue;
                }
                let j = schedule.heads[e] as usize;
                let k = schedule.tails[e] as usize;
                let mut current = shared.get(j);
                let other = shared.get(k);
                let d2 = (current[0] - other[0]).powi(2) + (current[1] - other[1]).powi(2);
                let coeff = attractive_coeff(cfg.a, cfg.b, d2);
                let mut pull = [0.0; 2];
                for d in 0..2 {
                    let g = clip(coeff * (current[d] - other[d])) * alpha;
                    current[d] += g;
                    pull[d] = -g;
                }
                shared.add(k, pull);
                let eps = schedule.epochs_per_sample[e];
                chunk.next_sample[local] += eps;
                let eps_neg = eps / neg_rate;
                let n_neg = if cfg.negative_sample_rate == 0 {
                    0
                } else {
                    ((now - chunk.next_negative[local]) / eps_neg).floor().max(0.0) as usize
                };
                for _ in 0..n_neg {
                    let k = chunk.rng.random_range(0..n);
                    if k == j {
                        continue;
                    }
                    let other = shared.get(k);
                    let d2 = (current[0] - other[0]).powi(2) + (current[1] - other[1]).powi(2);
                    let coeff = repulsive_coeff(cfg.a, cfg.b, cfg.repulsion, d2);
                    if coeff > 0.0 {
                        for d in 0..2 {
                            current[d] += clip(coeff * (current[d] - other[d])) * alpha;
                        }
                    }
                }
                chunk.next_negative[local] += n_neg as f64 * eps_neg;
                shared.set(j, current);
            }
        });
        if (0..n).any(|i| {
            let c = shared.get(i);
            !(c[0].is_finite() && c[1].is_finite())
        }) {
            return Err(Error::NonFinite { epoch });
        }
    }
    for (i, c) in coords.iter_mut().enumerate() {
        *c = shared.get(i);
    }
    Ok(())
}

/// The sweep with folds and (fold, reducer) tasks spread over the current
/// pool. With `hogwild` false the outcome equals the sequential sweep.
pub fn run_sweep_parallel(
    table: &Table,
    plan: &SplitPlan,
    grid: &SweepGrid,
    truth: Option<&[u32]>,
    hogwild: bool,
) -> Result<SweepOutcome> {
    grid.validate()?;
    let test_rows = plan.test_rows();
    let test_truth = test_truth(truth, &test_rows, table.row_count())?;
    let k = grid.max_neighbors();
    let folds: Vec<FoldData> = (0..plan.fold_count)
        .into_par_iter()
        .map(|f| {
            let mut fold = prepare_fold(table, plan, f)?;
            if k > 0 {
                let k = k.min(fold.train.rows().saturating_sub(1));
                fold.neighbors = Some(parallel_knn(&fold.train, k)?);
            }
            Ok(fold)
        })
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..grid.reducers.len()).map(move |r| (f, r)))
        .collect();
    let results: Vec<std::result::Result<ReducerFit, String>> = tasks
        .par_iter()
        .map(|&(f, r)| {
            let spec = &grid.reducers[r];
            let fit = if hogwild {
                fit_reducer_with(&folds[f], spec, grid, hogwild_layout)
            } else {
                fit_reducer(&folds[f], spec, grid)
            };
            fit.map_err(|e| {
                log::warn!("fold {f}, {}: {e}", spec.kind());
                e.to_string()
            })
        })
        .collect();
    let mut it = results.into_iter();
    let fits: Vec<Vec<_>> = folds
        .iter()
        .map(|_| it.by_ref().take(grid.reducers.len()).collect())
        .collect();
    let report = assemble(grid, &fits, test_rows.len(), test_truth.as_deref());
    Ok(SweepOutcome { report, folds, fits })
}

/// Runs `f` on a dedicated pool of `threads` workers (0 means one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> std::result::Result<T, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}
