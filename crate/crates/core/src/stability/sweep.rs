//! Cross-fold hyperparameter sweep. Work is split into stages so a caller
//! can run the per-fold and per-reducer tasks on any executor:
//! [`prepare_fold`], then [`fit_reducer`] for each (fold, reducer) pair,
//! then [`assemble`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::dataset::{Preprocessor, SplitPlan, Table};
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm_with, GmmParams, MixtureModel, Partition};
use crate::matrix::Matrix;
use crate::neighbors::{knn, NeighborGraph};
use crate::pca::{fit_pca, PcaModel};
use crate::rng::{derive_seed, Rng};
use crate::umap::{fit_umap_with, optimize_layout, EdgeSchedule, LayoutConfig, UmapModel, UmapParams};

use super::ari::{ari, mean_pairwise_ari};

const TAG_UMAP: u64 = 0x0a11;
const TAG_GMM: u64 = 0x0a12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReducerSpec {
    Umap { n_neighbors: usize, min_dist: f64 },
    Pca,
}

impl ReducerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Umap { .. } => "umap",
            Self::Pca => "pca",
        }
    }

    /// Neighbour count, 0 for PCA.
    pub fn n_neighbors(&self) -> usize {
        match self {
            Self::Umap { n_neighbors, .. } => *n_neighbors,
            Self::Pca => 0,
        }
    }

    /// Minimum distance, 0 for PCA.
    pub fn min_dist(&self) -> f64 {
        match self {
            Self::Umap { min_dist, .. } => *min_dist,
            Self::Pca => 0.0,
        }
    }

    pub fn is_umap(&self) -> bool {
        matches!(self, Self::Umap { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub reducers: Vec<ReducerSpec>,
    pub n_min: usize,
    pub n_max: usize,
    /// Template for UMAP fits; neighbour count, min_dist and seed are
    /// replaced per task.
    pub umap: UmapParams,
    pub gmm: GmmParams,
    pub seed: u64,
}

impl SweepGrid {
    pub fn new(neighbors: &[usize], min_dists: &[f64], include_pca: bool, n_min: usize, n_max: usize, seed: u64) -> Self {
        let mut reducers = Vec::new();
        for &k in neighbors {
            for &d in min_dists {
                reducers.push(ReducerSpec::Umap {
                    n_neighbors: k,
                    min_dist: d,
                });
            }
        }
        if include_pca {
            reducers.push(ReducerSpec::Pca);
        }
        Self {
            reducers,
            n_min,
            n_max,
            umap: UmapParams::new(15, 0.1, seed),
            gmm: GmmParams::default(),
            seed,
        }
    }

    /// Neighbours {2, 15, 150} x min_dist {0, 0.1, 0.25} plus PCA, n in 2..=20.
    pub fn full(seed: u64) -> Self {
        Self::new(&[2, 15, 150], &[0.0, 0.1, 0.25], true, 2, 20, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reducers.is_empty() {
            return Err(Error::Parameter("grid has no reducers".into()));
        }
        if self.n_min < 2 || self.n_max < self.n_min || self.n_max > 20 {
            return Err(Error::Parameter(format!(
                "cluster range {}..={} must lie within 2..=20",
                self.n_min, self.n_max
            )));
        }
        for r in &self.reducers {
            if let ReducerSpec::Umap { n_neighbors, min_dist } = *r {
                UmapParams {
                    n_neighbors,
                    min_dist,
                    ..self.umap
                }
                .validate()?;
            }
        }
        Ok(())
    }

    pub fn cluster_counts(&self) -> core::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    pub fn max_neighbors(&self) -> usize {
        self.reducers.iter().map(ReducerSpec::n_neighbors).max().unwrap_or(0)
    }

    pub fn umap_params(&self, fold: usize, n_neighbors: usize, min_dist: f64) -> UmapParams {
        UmapParams {
            n_neighbors,
            min_dist,
            seed: umap_seed(self.seed, fold, n_neighbors, min_dist),
            ..self.umap
        }
    }
}

pub fn umap_seed(master: u64, fold: usize, n_neighbors: usize, min_dist: f64) -> u64 {
    derive_seed(master, &[TAG_UMAP, fold as u64, n_neighbors as u64, min_dist.to_bits()])
}

pub fn gmm_seed(master: u64, fold: usize, n: usize) -> u64 {
    derive_seed(master, &[TAG_GMM, fold as u64, n as u64])
}

/// One point of the grid: a reducer together with a cluster count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub reducer: ReducerSpec,
    pub n_clusters: usize,
}

/// Inputs shared by every task of one leave-one-fold-out training set.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: usize,
    pub training_rows: Vec<usize>,
    pub preprocessor: Preprocessor,
    pub train: Arc<Matrix>,
    pub test: Matrix,
    /// Neighbours of the training rows at the grid's largest neighbour count.
    pub neighbors: Option<NeighborGraph>,
}

/// Fits the preprocessor on the fold's training rows and encodes both
/// training and test rows. Neighbours are left for the caller.
pub fn prepare_fold(table: &Table, plan: &SplitPlan, fold: usize) -> Result<FoldData> {
    if plan.row_count() != table.row_count() {
        return Err(Error::LengthMismatch {
            left: plan.row_count(),
            right: table.row_count(),
        });
    }
    let training_rows = plan.leave_one_out(fold);
    let preprocessor = Preprocessor::fit(table, &training_rows)?;
    let train = preprocessor.apply(table, &training_rows)?;
    let test = preprocessor.apply(table, &plan.test_rows())?;
    Ok(FoldData {
        fold,
        training_rows,
        preprocessor,
        train: Arc::new(train),
        test,
        neighbors: None,
    })
}

impl FoldData {
    pub fn compute_neighbors(&mut self, k: usize) -> Result<()> {
        if k > 0 {
            let k = k.min(self.train.rows().saturating_sub(1));
            self.neighbors = Some(knn(&self.train, k)?);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reducer {
    Umap(UmapModel),
    Pca(PcaModel),
}

impl Reducer {
    pub fn transform(&self, matrix: &Matrix) -> Result<Vec<[f64; 2]>> {
        match self {
            Self::Umap(m) => m.transform(matrix),
            Self::Pca(m) => m.transform(matrix),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Umap(m) => m.dim(),
            Self::Pca(m) => m.dim(),
        }
    }
}

/// One reducer fitted on one fold, with a mixture per cluster count.
#[derive(Debug, Clone)]
pub struct ReducerFit {
    pub reducer: Reducer,
    pub train_coords: Vec<[f64; 2]>,
    pub test_coords: Vec<[f64; 2]>,
    /// Indexed by `n - n_min`; `Err` holds the failure cause.
    pub mixtures: Vec<core::result::Result<(MixtureModel, Partition), String>>,
}

/// Fits one reducer on a prepared fold, embeds the test rows and fits a
/// mixture for every cluster count in the grid.
pub fn fit_reducer(fold: &FoldData, spec: &ReducerSpec, grid: &SweepGrid) -> Result<ReducerFit> {
    fit_reducer_with(fold, spec, grid, optimize_layout)
}

/// As [`fit_reducer`] with a caller-supplied layout optimiser.
pub fn fit_reducer_with<F>(fold: &FoldData, spec: &ReducerSpec, grid: &SweepGrid, optimize: F) -> Result<ReducerFit>
where
    F: FnOnce(&mut [[f64; 2]], &EdgeSchedule, &LayoutConfig, &mut Rng) -> Result<()>,
{
    let (reducer, train_coords) = match *spec {
        ReducerSpec::Umap { n_neighbors, min_dist } => {
            let params = grid.umap_params(fold.fold, n_neighbors, min_dist);
            let owned;
            let neighbors = match &fold.neighbors {
                Some(g) if g.k() >= n_neighbors => g,
                _ => {
                    params.validate()?;
                    if fold.train.rows() <= n_neighbors {
                        return Err(Error::TooFewRows {
                            rows: fold.train.rows(),
                            required: n_neighbors + 1,
                        });
                    }
                    owned = knn(&fold.train, n_neighbors)?;
                    &owned
                }
            };
            let model = fit_umap_with(fold.train.clone(), neighbors, &params, optimize)?;
            let coords = model.embedding().to_vec();
            (Reducer::Umap(model), coords)
        }
        ReducerSpec::Pca => {
            let model = fit_pca(&fold.train)?;
            let coords = model.transform(&fold.train)?;
            (Reducer::Pca(model), coords)
        }
    };
    let test_coords = reducer.transform(&fold.test)?;
    let mixtures = grid
        .cluster_counts()
        .map(|n| {
            let seed = gmm_seed(grid.seed, fold.fold, n);
            fit_gmm_with(&train_coords, n, seed, &grid.gmm)
                .and_then(|m| {
                    let p = m.predict(&test_coords)?;
                    Ok((m, p))
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(ReducerFit {
        reducer,
        train_coords,
        test_coords,
        mixtures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConfigStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub config: SweepConfig,
    /// `None` when any fold failed.
    pub mean_pairwise_ari: Option<f64>,
    /// Non-null cluster count of each fold-model on the test set.
    pub nonnull: Vec<usize>,
    pub mean_nonnull: f64,
    pub valid: bool,
    pub selected: bool,
    /// Mean over fold-models of the ARI against known labels.
    pub ground_truth_ari: Option<f64>,
    pub status: ConfigStatus,
    pub partitions: Vec<Partition>,
}

/// `mean(nonnull) >= n - 0.5`, evaluated exactly in integers.
pub fn is_valid(nonnull: &[usize], n: usize) -> bool {
    !nonnull.is_empty() && 2 * nonnull.iter().sum::<usize>() >= (2 * n - 1) * nonnull.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// Index into the report's configs.
    Selected(usize),
    NoStableClustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub fold_count: usize,
    pub test_rows: usize,
    pub configs: Vec<ConfigResult>,
    pub selection: Selection,
}

impl SweepReport {
    pub fn selected(&self) -> Option<&ConfigResult> {
        match self.selection {
            Selection::Selected(i) => self.configs.get(i),
            Selection::NoStableClustering => None,
        }
    }

    pub fn find(&self, reducer: &ReducerSpec, n: usize) -> Option<&ConfigResult> {
        self.configs
            .iter()
            .find(|c| c.config.reducer == *reducer && c.config.n_clusters == n)
    }

    /// Checks the structural invariants of a report, returning a
    /// description of the first violation.
    pub fn check_invariants(&self) -> core::result::Result<(), String> {
        for c in &self.configs {
            let n = c.config.n_clusters;
            if c.status == ConfigStatus::Ok {
                if c.nonnull.len() != self.fold_count || c.partitions.len() != self.fold_count {
                    return Err(format!("config n={n}: expected {} fold-models", self.fold_count));
                }
                if c.nonnull.iter().any(|&k| k > n) {
                    return Err(format!("config n={n}: more non-null clusters than declared"));
                }
                for p in &c.partitions {
                    if p.labels.len() != self.test_rows || p.labels.iter().any(|&l| l as usize >= n) {
                        return Err(format!("config n={n}: partition out of range"));
                    }
                }
                match c.mean_pairwise_ari {
                    Some(a) if (-1.0..=1.0).contains(&a) => {}
                    _ => return Err(format!("config n={n}: ARI missing or out of range")),
                }
                if c.valid != is_valid(&c.nonnull, n) {
                    return Err(format!("config n={n}: validity flag disagrees with counts"));
                }
            } else if c.valid {
                return Err(format!("config n={n}: failed config flagged valid"));
            }
        }
        let flagged = self.configs.iter().filter(|c| c.selected).count();
        match self.selection {
            Selection::Selected(i) => {
                let s = self.configs.get(i).ok_or("selection out of range")?;
                if flagged != 1 || !s.selected || !s.valid {
                    return Err("selected config is not a single valid config".into());
                }
                let best = s.mean_pairwise_ari.unwrap_or(f64::NEG_INFINITY);
                if self.configs.iter().any(|c| c.valid && c.mean_pairwise_ari.is_some_and(|a| a > best)) {
                    return Err("a valid config has a higher ARI than the selection".into());
                }
            }
            Selection::NoStableClustering => {
                if flagged != 0 || self.configs.iter().any(|c| c.valid) {
                    return Err("no selection despite a valid config".into());
                }
            }
        }
        Ok(())
    }
}

fn preference(a: &ConfigResult, b: &ConfigResult) -> Ordering {
    // higher ARI first, then smaller n, fewer neighbours, smaller min_dist
    let aa = a.mean_pairwise_ari.unwrap_or(f64::NEG_INFINITY);
    let ba = b.mean_pairwise_ari.unwrap_or(f64::NEG_INFINITY);
    ba.total_cmp(&aa)
        .then(a.config.n_clusters.cmp(&b.config.n_clusters))
        .then(a.config.reducer.n_neighbors().cmp(&b.config.reducer.n_neighbors()))
        .then(a.config.reducer.min_dist().total_cmp(&b.config.reducer.min_dist()))
}

/// Best valid config among those accepted by `filter`.
pub fn select_where(configs: &[ConfigResult], filter: impl Fn(&ConfigResult) -> bool) -> Selection {
    configs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.valid && c.status == ConfigStatus::Ok && c.mean_pairwise_ari.is_some() && filter(c))
        .min_by(|(_, a), (_, b)| preference(a, b))
        .map_or(Selection::NoStableClustering, |(i, _)| Selection::Selected(i))
}

pub fn select(configs: &[ConfigResult]) -> Selection {
    select_where(configs, |_| true)
}

/// Builds the report from per-fold, per-reducer results
/// (`fits[fold][reducer]`). `truth` holds known labels of the test rows.
pub fn assemble(
    grid: &SweepGrid,
    fits: &[Vec<core::result::Result<ReducerFit, String>>],
    test_rows: usize,
    truth: Option<&[u32]>,
) -> SweepReport {
    let fold_count = fits.len();
    let mut configs = Vec::new();
    for (r, spec) in grid.reducers.iter().enumerate() {
        for (ni, n) in grid.cluster_counts().enumerate() {
            let mut partitions = Vec::with_capacity(fold_count);
            let mut failure = None;
            for (f, fold) in fits.iter().enumerate() {
                match fold.get(r) {
                    Some(Ok(fit)) => match &fit.mixtures[ni] {
                        Ok((_, p)) => partitions.push(p.clone()),
                        Err(e) => {
                            failure.get_or_insert_with(|| format!("fold {f}: {e}"));
                        }
                    },
                    Some(Err(e)) => {
                        failure.get_or_insert_with(|| format!("fold {f}: {e}"));
                    }
                    None => {
                        failure.get_or_insert_with(|| format!("fold {f}: missing result"));
                    }
                }
            }
            let nonnull: Vec<usize> = partitions.iter().map(|p| p.n_nonnull).collect();
            let mean_nonnull = if nonnull.is_empty() {
                0.0
            } else {
                nonnull.iter().sum::<usize>() as f64 / nonnull.len() as f64
            };
            let labels: Vec<&[u32]> = partitions.iter().map(|p| &p.labels[..]).collect();
            let mean_ari = if failure.is_none() {
                match mean_pairwise_ari(&labels) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        failure = Some(e.to_string());
                        None
                    }
                }
            } else {
                None
            };
            let ground_truth_ari = truth.filter(|_| !labels.is_empty()).and_then(|t| {
                let scores: Option<Vec<f64>> = labels.iter().map(|l| ari(l, t).ok()).collect();
                scores.map(|s| s.iter().sum::<f64>() / s.len() as f64)
            });
            let status = match failure {
                None => ConfigStatus::Ok,
                Some(e) => {
                    log::warn!("{} k={} min_dist={} n={n} failed: {e}", spec.kind(), spec.n_neighbors(), spec.min_dist());
                    ConfigStatus::Failed(e)
                }
            };
            let valid = status == ConfigStatus::Ok && is_valid(&nonnull, n);
            configs.push(ConfigResult {
                config: SweepConfig {
                    reducer: *spec,
                    n_clusters: n,
                },
                mean_pairwise_ari: mean_ari,
                nonnull,
                mean_nonnull,
                valid,
                selected: false,
                ground_truth_ari,
                status,
                partitions,
            });
        }
    }
    let selection = select(&configs);
    if let Selection::Selected(i) = selection {
        configs[i].selected = true;
    }
    SweepReport {
        fold_count,
        test_rows,
        configs,
        selection,
    }
}

/// Everything the sweep produced, retained for characterisation and export.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub folds: Vec<FoldData>,
    /// `fits[fold][reducer]`.
    pub fits: Vec<Vec<core::result::Result<ReducerFit, String>>>,
}

/// Sequential sweep. `truth`, when given, holds a known label for every
/// table row and is scored against each fold-model's test labels.
pub fn run_sweep(table: &Table, plan: &SplitPlan, grid: &SweepGrid, truth: Option<&[u32]>) -> Result<SweepOutcome> {
    grid.validate()?;
    let test_rows = plan.test_rows();
    let test_truth = test_truth(truth, &test_rows, table.row_count())?;
    let mut folds = Vec::with_capacity(plan.fold_count);
    for f in 0..plan.fold_count {
        let mut fold = prepare_fold(table, plan, f)?;
        fold.compute_neighbors(grid.max_neighbors())?;
        folds.push(fold);
    }
    let fits: Vec<Vec<_>> = folds
        .iter()
        .map(|fold| {
            grid.reducers
                .iter()
                .map(|spec| fit_reducer(fold, spec, grid).map_err(|e| e.to_string()))
                .collect()
        })
        .collect();
    let report = assemble(grid, &fits, test_rows.len(), test_truth.as_deref());
    Ok(SweepOutcome { report, folds, fits })
}

/// Restricts per-row truth labels to the test rows.
pub fn test_truth(truth: Option<&[u32]>, test_rows: &[usize], row_count: usize) -> Result<Option<Vec<u32>>> {
    match truth {
        None => Ok(None),
        Some(t) if t.len() != row_count => Err(Error::LengthMismatch {
            left: t.len(),
            right: row_count,
        }),
        Some(t) => Ok(Some(test_rows.iter().map(|&i| t[i]).collect())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn result(reducer: ReducerSpec, n: usize, ari: f64, nonnull: Vec<usize>) -> ConfigResult {
        ConfigResult {
            config: SweepConfig { reducer, n_clusters: n },
            mean_pairwise_ari: Some(ari),
            valid: is_valid(&nonnull, n),
            mean_nonnull: nonnull.iter().sum::<usize>() as f64 / nonnull.len() as f64,
            nonnull,
            selected: false,
            ground_truth_ari: None,
            status: ConfigStatus::Ok,
            partitions: Vec::new(),
        }
    }

    const U15: ReducerSpec = ReducerSpec::Umap { n_neighbors: 15, min_dist: 0.0 };
    const U150: ReducerSpec = ReducerSpec::Umap { n_neighbors: 150, min_dist: 0.1 };

    #[test]
    fn validity_cutoff() {
        // mean 2.5 at n = 3 is exactly n - 0.5
        assert!(is_valid(&[2, 3, 2, 3], 3));
        assert!(!is_valid(&[1, 1, 1, 2, 1], 3));
        assert!(is_valid(&[2, 2, 2, 2, 2], 2));
        assert!(!is_valid(&[], 2));
    }

    #[test]
    fn invalid_high_ari_loses() {
        let configs = vec![
            result(U15, 3, 0.8, vec![1, 1, 1, 2, 1]),
            result(U150, 2, 0.49, vec![2, 2, 2, 2, 2]),
        ];
        assert_eq!(select(&configs), Selection::Selected(1));
    }

    #[test]
    fn no_valid_config() {
        let configs = vec![result(U15, 4, 0.9, vec![1, 1, 1, 1, 1])];
        assert_eq!(select(&configs), Selection::NoStableClustering);
    }

    #[test]
    fn ties_prefer_small_n_then_few_neighbours_then_small_min_dist() {
        let u15_01 = ReducerSpec::Umap { n_neighbors: 15, min_dist: 0.1 };
        let configs = vec![
            result(U15, 4, 0.7, vec![4; 5]),
            result(U15, 2, 0.7, vec![2; 5]),
        ];
        assert_eq!(select(&configs), Selection::Selected(1));
        let configs = vec![
            result(U150, 2, 0.7, vec![2; 5]),
            result(u15_01, 2, 0.7, vec![2; 5]),
            result(U15, 2, 0.7, vec![2; 5]),
        ];
        assert_eq!(select(&configs), Selection::Selected(2));
    }

    #[test]
    fn grid_shape() {
        let g = SweepGrid::full(1);
        assert_eq!(g.reducers.len(), 10);
        assert_eq!(g.cluster_counts().count(), 19);
        assert_eq!(g.max_neighbors(), 150);
        g.validate().unwrap();
        let mut bad = g.clone();
        bad.n_max = 21;
        assert!(bad.validate().is_err());
    }
}
