//! End-to-end orchestration: sweep, selection, characterisation and
//! projection of new records.

use phenomap_core::dataset::{PreprocessWarning, SplitPlan, Table};
use phenomap_core::phenotype::{characterize, primary_fold, summarize_across_folds};
use phenomap_core::stability::{ReducerSpec, Selection, SweepGrid, SweepOutcome};
use phenomap_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::artifact::{FoldModel, PipelineArtifact, SelectedModel};
use crate::error::{PipelineError, Result};
use crate::io::{outcomes, truth_labels};
use crate::parallel::{run_sweep_parallel, with_threads};
use crate::schema::SchemaConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Grid and execution settings after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub neighbors: Vec<usize>,
    pub min_dists: Vec<f64>,
    pub include_pca: bool,
    pub n_min: usize,
    pub n_max: usize,
    pub seed: u64,
    pub epochs: Option<usize>,
    /// 0 uses one thread per core.
    pub threads: usize,
    pub hogwild: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            neighbors: vec![2, 15, 150],
            min_dists: vec![0.0, 0.1, 0.25],
            include_pca: true,
            n_min: 2,
            n_max: 20,
            seed: 0,
            epochs: None,
            threads: 1,
            hogwild: false,
        }
    }
}

impl SweepOptions {
    pub fn grid(&self) -> SweepGrid {
        let mut grid = SweepGrid::new(
            &self.neighbors,
            &self.min_dists,
            self.include_pca,
            self.n_min,
            self.n_max,
            self.seed,
        );
        grid.umap.epochs = self.epochs;
        grid
    }

    /// Fills unset fields from the schema's sweep section.
    pub fn with_settings(mut self, s: &crate::schema::SweepSettings) -> Self {
        if let Some(v) = &s.neighbors {
            self.neighbors = v.clone();
        }
        if let Some(v) = &s.min_dists {
            self.min_dists = v.clone();
        }
        if let Some(v) = s.include_pca {
            self.include_pca = v;
        }
        if let Some(v) = s.n_min {
            self.n_min = v;
        }
        if let Some(v) = s.n_max {
            self.n_max = v;
        }
        if let Some(v) = s.seed {
            self.seed = v;
        }
        if s.epochs.is_some() {
            self.epochs = s.epochs;
        }
        self
    }
}

/// Everything a sweep run produced.
pub struct PipelineRun {
    pub artifact: PipelineArtifact,
    pub outcome: SweepOutcome,
}

pub fn run_pipeline(table: &Table, schema: &SchemaConfig, opts: &SweepOptions) -> Result<PipelineRun> {
    let grid = opts.grid();
    grid.validate()?;
    let truth = match &schema.ground_truth {
        Some(c) => Some(truth_labels(table, c)?),
        None => None,
    };
    let outcome_all = outcomes(table, schema)?;
    let plan = SplitPlan::new(table.row_count(), opts.seed)?;
    let test_rows = plan.test_rows();
    log::info!(
        "{} rows: {} test, {} folds, {} reducers x {} cluster counts",
        table.row_count(),
        test_rows.len(),
        plan.fold_count,
        grid.reducers.len(),
        grid.cluster_counts().count()
    );
    let outcome = with_threads(opts.threads, || {
        run_sweep_parallel(table, &plan, &grid, truth.as_deref(), opts.hogwild)
    })
    .map_err(|e| PipelineError::Usage(e.to_string()))??;
    let test_truth = truth.as_ref().map(|t| test_rows.iter().map(|&i| t[i]).collect::<Vec<_>>());
    let test_outcome = outcome_all.map(|o| test_rows.iter().map(|&i| o[i]).collect::<Vec<_>>());
    let model = match outcome.report.selection {
        Selection::Selected(i) => Some(build_selected(&outcome, &grid, i, truth.as_deref(), test_outcome.as_deref())?),
        Selection::NoStableClustering => None,
    };
    let artifact = PipelineArtifact {
        tool_version: TOOL_VERSION.to_owned(),
        seed: opts.seed,
        deterministic: !opts.hogwild,
        schema: schema.clone(),
        split: plan,
        grid,
        report: outcome.report.clone(),
        test_table: table.select_rows(&test_rows),
        test_rows,
        test_truth,
        test_outcome,
        model,
    };
    Ok(PipelineRun { artifact, outcome })
}

fn build_selected(
    outcome: &SweepOutcome,
    grid: &SweepGrid,
    config_index: usize,
    truth: Option<&[u32]>,
    test_outcome: Option<&[Option<bool>]>,
) -> Result<SelectedModel> {
    let result = &outcome.report.configs[config_index];
    let config = result.config;
    let r = grid
        .reducers
        .iter()
        .position(|s| *s == config.reducer)
        .ok_or_else(|| CoreError::Parameter("selected reducer missing from grid".into()))?;
    let ni = config.n_clusters - grid.n_min;
    let mut folds = Vec::with_capacity(outcome.folds.len());
    let mut profiles = Vec::with_capacity(outcome.folds.len());
    for (f, fold) in outcome.folds.iter().enumerate() {
        let fit = outcome.fits[f][r].as_ref().map_err(|e| CoreError::Numerical(e.clone()))?;
        let (mixture, partition) = fit.mixtures[ni].as_ref().map_err(|e| CoreError::Numerical(e.clone()))?;
        let train_labels = mixture.predict(&fit.train_coords)?.labels;
        profiles.push(characterize(&fold.test, partition, fold.preprocessor.feature_names())?);
        folds.push(FoldModel {
            fold: f,
            preprocessor: fold.preprocessor.clone(),
            reducer: fit.reducer.clone(),
            mixture: mixture.clone(),
            training_rows: fold.training_rows.clone(),
            train_coords: fit.train_coords.clone(),
            train_labels,
            train_truth: truth.map(|t| fold.training_rows.iter().map(|&i| t[i]).collect()),
            test_coords: fit.test_coords.clone(),
            test_partition: partition.clone(),
        });
    }
    let partitions: Vec<_> = folds.iter().map(|f| f.test_partition.clone()).collect();
    let primary = primary_fold(&partitions)?;
    let summary = summarize_across_folds(&partitions, &profiles, primary, test_outcome)?;
    Ok(SelectedModel {
        config,
        primary_fold: primary,
        folds,
        profiles,
        summary,
    })
}

/// One record placed into every fold-model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// Under the primary fold-model.
    pub coordinates: [f64; 2],
    pub label: u32,
    pub responsibilities: Vec<f64>,
    pub fold_coordinates: Vec<[f64; 2]>,
    pub fold_labels: Vec<u32>,
    pub warnings: Vec<String>,
}

/// Preprocesses, embeds and labels every row of `records` under each stored
/// fold-model. `records` must share the artifact's column layout.
pub fn project(model: &SelectedModel, records: &Table) -> Result<Vec<Projection>> {
    let rows: Vec<usize> = (0..records.row_count()).collect();
    let n = rows.len();
    let mut out: Vec<Projection> = (0..n)
        .map(|_| Projection {
            coordinates: [0.0; 2],
            label: 0,
            responsibilities: Vec::new(),
            fold_coordinates: Vec::with_capacity(model.folds.len()),
            fold_labels: Vec::with_capacity(model.folds.len()),
            warnings: Vec::new(),
        })
        .collect();
    for (f, fm) in model.folds.iter().enumerate() {
        let (matrix, warnings) = fm.preprocessor.apply_with_warnings(records, &rows)?;
        let coords = fm.reducer.transform(&matrix)?;
        let labels = fm.mixture.predict(&coords)?.labels;
        for ((p, c), l) in out.iter_mut().zip(&coords).zip(&labels) {
            p.fold_coordinates.push(*c);
            p.fold_labels.push(*l);
        }
        if f == model.primary_fold {
            let resp = fm.mixture.responsibilities(&coords)?;
            for (i, (p, r)) in out.iter_mut().zip(resp).enumerate() {
                p.coordinates = coords[i];
                p.label = labels[i];
                p.responsibilities = r;
            }
            for w in warnings {
                let row = match &w {
                    PreprocessWarning::Imputed { row, .. } | PreprocessWarning::UnseenCategory { row, .. } => *row,
                };
                out[row].warnings.push(w.to_string());
            }
        }
    }
    Ok(out)
}

/// Profiles recomputed from the stored test rows; equal to the stored ones.
pub fn recompute_profiles(artifact: &PipelineArtifact) -> Result<Vec<Vec<phenomap_core::phenotype::ClusterProfile>>> {
    let model = artifact.require_model()?;
    let rows: Vec<usize> = (0..artifact.test_table.row_count()).collect();
    model
        .folds
        .iter()
        .map(|fm| {
            let m = fm.preprocessor.apply(&artifact.test_table, &rows)?;
            Ok(characterize(&m, &fm.test_partition, fm.preprocessor.feature_names())?)
        })
        .collect()
}

pub fn reducer_label(spec: &ReducerSpec) -> String {
    match spec {
        ReducerSpec::Umap { n_neighbors, min_dist } => format!("umap(k={n_neighbors}, min_dist={min_dist})"),
        ReducerSpec::Pca => "pca".into(),
    }
}
