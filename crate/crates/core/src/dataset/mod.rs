//! Tabular visit data: schema, parsing, complaint filtering, splitting,
//! preprocessing and the synthetic benchmark.

mod preprocess;
mod split;
mod synthetic;
mod table;

pub use preprocess::{FeatureEncoder, PreprocessWarning, Preprocessor, MISSING_CATEGORY};
pub use split::{make_split, Assignment, SplitPlan, DEFAULT_FOLD_COUNT, DEFAULT_TEST_FRACTION};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec, LABEL_COLUMN};
pub use table::{filter_by_complaint, parse_cell, Cell, Column, ColumnKind, Table, DEFAULT_MISSING_TOKENS};
