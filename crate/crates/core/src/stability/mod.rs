//! Partition agreement, cross-fold sweep and the selection rule.

mod ari;
mod sweep;

pub use ari::{ari, mean_pairwise_ari, Contingency};
pub use sweep::{
    assemble, fit_reducer, fit_reducer_with, gmm_seed, is_valid, prepare_fold, run_sweep, select,
    select_where, test_truth, umap_seed, ConfigResult, ConfigStatus, FoldData, Reducer, ReducerFit,
    ReducerSpec, Selection, SweepConfig, SweepGrid, SweepOutcome, SweepReport,
};
