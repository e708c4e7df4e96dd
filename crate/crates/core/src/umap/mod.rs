//! Two-dimensional UMAP: fuzzy neighbour graph, spectral initialisation,
//! negative-sampling SGD and out-of-sample transform.

mod curve;
mod fuzzy;
mod init;
mod layout;

pub use curve::{curve_target, fit_curve, psi, sum_squares, CurveParams};
pub use fuzzy::{fuzzy_graph, fuzzy_union, smooth_knn, Edge, FuzzyGraph, SmoothKnn, SMOOTH_KNN_TOLERANCE};
pub use init::{connected_components, normalize_layout, random_layout, spectral_layout};
pub use layout::{
    attractive_coeff, clip, learning_rate_at, optimize_layout, refine_point, repulsive_coeff,
    EdgeSchedule, LayoutConfig, GRADIENT_CLIP,
};

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neighbors::{knn, knn_query, NeighborGraph};
use crate::rng::{derive_seed, hash_values, rng_from, Rng};

const TAG_INIT: u64 = 0x1417;
const TAG_SGD: u64 = 0x56d;
const TAG_TRANSFORM: u64 = 0x7f0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    /// `None` picks 500 below 10,000 rows and 200 otherwise.
    pub epochs: Option<usize>,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    /// `None` uses a third of the fitting epochs.
    pub transform_epochs: Option<usize>,
    pub seed: u64,
}

impl UmapParams {
    pub fn new(n_neighbors: usize, min_dist: f64, seed: u64) -> Self {
        Self {
            n_neighbors,
            min_dist,
            epochs: None,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            transform_epochs: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::Parameter(format!("n_neighbors = {} must be >= 2", self.n_neighbors)));
        }
        if !(self.min_dist >= 0.0 && self.min_dist.is_finite()) {
            return Err(Error::Parameter(format!("min_dist = {} must be >= 0", self.min_dist)));
        }
        if self.epochs == Some(0) {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_epochs(&self, rows: usize) -> usize {
        self.epochs.unwrap_or(if rows < 10_000 { 500 } else { 200 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitKind {
    Spectral,
    Random,
}

/// A fitted embedding. Immutable; `transform` only reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmapModel {
    params: UmapParams,
    epochs: usize,
    curve: CurveParams,
    init: InitKind,
    embedding: Vec<[f64; 2]>,
    training: Arc<Matrix>,
    training_digest: u64,
}

/// Bit-pattern digest of a matrix, shape included.
pub fn matrix_digest(m: &Matrix) -> u64 {
    derive_seed(hash_values(m.as_slice()), &[m.rows() as u64, m.cols() as u64])
}

pub fn fit_umap(matrix: Arc<Matrix>, params: &UmapParams) -> Result<UmapModel> {
    params.validate()?;
    check_rows(&matrix, params)?;
    let neighbors = knn(&matrix, params.n_neighbors)?;
    fit_umap_with_neighbors(matrix, &neighbors, params)
}

/// Fits from a precomputed self-excluding neighbour graph with at least
/// `n_neighbors` columns; extra columns are dropped.
pub fn fit_umap_with_neighbors(
    matrix: Arc<Matrix>,
    neighbors: &NeighborGraph,
    params: &UmapParams,
) -> Result<UmapModel> {
    fit_umap_with(matrix, neighbors, params, optimize_layout)
}

/// As [`fit_umap_with_neighbors`] with a caller-supplied optimiser, which
/// must have the contract of [`optimize_layout`].
pub fn fit_umap_with<F>(
    matrix: Arc<Matrix>,
    neighbors: &NeighborGraph,
    params: &UmapParams,
    optimize: F,
) -> Result<UmapModel>
where
    F: FnOnce(&mut [[f64; 2]], &EdgeSchedule, &LayoutConfig, &mut Rng) -> Result<()>,
{
    params.validate()?;
    check_rows(&matrix, params)?;
    if neighbors.len() != matrix.rows() {
        return Err(Error::LengthMismatch {
            left: neighbors.len(),
            right: matrix.rows(),
        });
    }
    let neighbors = if neighbors.k() == params.n_neighbors {
        neighbors.clone()
    } else {
        neighbors.truncate(params.n_neighbors)?
    };
    let curve = fit_curve(params.min_dist)?;
    let graph = fuzzy_graph(&neighbors);
    let clamped = graph.calibration.iter().filter(|c| c.clamped).count();
    if clamped > 0 {
        log::warn!("{clamped} rows have a clamped neighbourhood bandwidth");
    }
    let epochs = params.resolved_epochs(matrix.rows());

    let mut init_rng = rng_from(derive_seed(params.seed, &[TAG_INIT]));
    let (mut coords, init) = match spectral_layout(&matrix, &graph, &mut init_rng) {
        Some(c) => (c, InitKind::Spectral),
        None => {
            log::warn!("spectral initialisation failed; using random layout");
            (random_layout(matrix.rows(), &mut init_rng), InitKind::Random)
        }
    };
    normalize_layout(&mut coords, &mut init_rng);

    let schedule = EdgeSchedule::from_graph(&graph, epochs);
    let cfg = LayoutConfig {
        a: curve.a,
        b: curve.b,
        epochs,
        negative_sample_rate: params.negative_sample_rate,
        learning_rate: params.learning_rate,
        repulsion: 1.0,
    };
    let mut sgd_rng = rng_from(derive_seed(params.seed, &[TAG_SGD]));
    optimize(&mut coords, &schedule, &cfg, &mut sgd_rng)?;

    let training_digest = matrix_digest(&matrix);
    Ok(UmapModel {
        params: *params,
        epochs,
        curve,
        init,
        embedding: coords,
        training: matrix,
        training_digest,
    })
}

fn check_rows(matrix: &Matrix, params: &UmapParams) -> Result<()> {
    if matrix.rows() <= params.n_neighbors {
        return Err(Error::TooFewRows {
            rows: matrix.rows(),
            required: params.n_neighbors + 1,
        });
    }
    Ok(())
}

impl UmapModel {
    pub fn params(&self) -> &UmapParams {
        &self.params
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn curve(&self) -> CurveParams {
        self.curve
    }

    pub fn init_kind(&self) -> InitKind {
        self.init
    }

    pub fn embedding(&self) -> &[[f64; 2]] {
        &self.embedding
    }

    pub fn training(&self) -> &Arc<Matrix> {
        &self.training
    }

    pub fn training_digest(&self) -> u64 {
        self.training_digest
    }

    pub fn dim(&self) -> usize {
        self.training.cols()
    }

    pub fn transform_epochs(&self) -> usize {
        self.params.transform_epochs.unwrap_or(self.epochs / 3)
    }

    fn refine_config(&self, epochs: usize) -> LayoutConfig {
        LayoutConfig {
            a: self.curve.a,
            b: self.curve.b,
            epochs,
            negative_sample_rate: self.params.negative_sample_rate,
            learning_rate: self.params.learning_rate / 4.0,
            repulsion: 1.0,
        }
    }

    /// Membership-weighted average of the neighbours' embeddings. Exact
    /// matches (distance 0) take the mean of the matched embeddings.
    pub fn initial_position(&self, indices: &[u32], distances: &[f64]) -> ([f64; 2], Vec<(u32, f64)>) {
        let cal = smooth_knn(distances);
        let edges: Vec<(u32, f64)> = indices
            .iter()
            .zip(distances)
            .map(|(&j, &d)| (j, cal.membership(d)))
            .collect();
        let exact: Vec<u32> = indices
            .iter()
            .zip(distances)
            .filter(|(_, &d)| d == 0.0)
            .map(|(&j, _)| j)
            .collect();
        let (pool, weights): (Vec<u32>, Vec<f64>) = if exact.is_empty() {
            edges.iter().copied().unzip()
        } else {
            let w = alloc::vec![1.0; exact.len()];
            (exact, w)
        };
        let total: f64 = weights.iter().sum();
        let mut p = [0.0; 2];
        for (&j, &w) in pool.iter().zip(&weights) {
            let e = self.embedding[j as usize];
            p[0] += w * e[0];
            p[1] += w * e[1];
        }
        p[0] /= total;
        p[1] /= total;
        (p, edges)
    }

    /// Embeds one preprocessed row given its training neighbours. The
    /// random stream depends only on the row values, so results do not
    /// depend on batch composition.
    pub fn transform_point(
        &self,
        row: &[f64],
        indices: &[u32],
        distances: &[f64],
        epochs: usize,
    ) -> Result<[f64; 2]> {
        let (mut p, edges) = self.initial_position(indices, distances);
        let mut rng = rng_from(derive_seed(self.params.seed, &[TAG_TRANSFORM, hash_values(row)]));
        refine_point(&mut p, &edges, &self.embedding, &self.refine_config(epochs), &mut rng)?;
        Ok(p)
    }

    pub fn transform(&self, queries: &Matrix) -> Result<Vec<[f64; 2]>> {
        self.transform_with_epochs(queries, self.transform_epochs())
    }

    pub fn transform_with_epochs(&self, queries: &Matrix, epochs: usize) -> Result<Vec<[f64; 2]>> {
        if queries.rows() == 0 {
            return Ok(Vec::new());
        }
        let nn = self.query_neighbors(queries)?;
        (0..queries.rows())
            .map(|i| self.transform_point(queries.row(i), nn.indices(i), nn.distances(i), epochs))
            .collect()
    }

    pub fn query_neighbors(&self, queries: &Matrix) -> Result<NeighborGraph> {
        knn_query(queries, &self.training, self.params.n_neighbors)
    }
}
