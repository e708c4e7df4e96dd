//! Declarative schema config: column kinds, exclusions, missing tokens and
//! optional sweep defaults.

use std::collections::BTreeMap;
use std::path::Path;

use phenomap_core::dataset::{Cell, ColumnKind, DEFAULT_MISSING_TOKENS};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub column: String,
    /// Value counted as positive. Numeric columns default to any non-zero value.
    #[serde(default)]
    pub positive: Option<String>,
}

/// Sweep settings a schema file may carry. Command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default)]
    pub neighbors: Option<Vec<usize>>,
    #[serde(default)]
    pub min_dists: Option<Vec<f64>>,
    #[serde(default)]
    pub include_pca: Option<bool>,
    #[serde(default)]
    pub n_min: Option<usize>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    /// Column name to kind (`numeric`, `categorical`, `binary`).
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    #[serde(default)]
    pub excluded: Vec<String>,
    #[serde(default)]
    pub complaint_flags: Vec<String>,
    /// When set, only rows with this complaint flag are used.
    #[serde(default)]
    pub complaint: Option<String>,
    #[serde(default)]
    pub missing_tokens: Option<Vec<String>>,
    #[serde(default)]
    pub outcome: Option<OutcomeSpec>,
    /// Known class labels, scored against clusters but never used as features.
    #[serde(default)]
    pub ground_truth: Option<String>,
    /// Infer kinds of undeclared columns (numeric if every value parses).
    #[serde(default)]
    pub infer: bool,
    #[serde(default)]
    pub sweep: SweepSettings,
}

impl SchemaConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|message| PipelineError::Config {
            path: path.to_owned(),
            message,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, kind) in &self.columns {
            if ColumnKind::parse(kind).is_none() {
                return Err(format!("column `{name}` has unknown kind `{kind}`"));
            }
        }
        if let Some(c) = &self.complaint {
            if !self.complaint_flags.contains(c) {
                return Err(format!("complaint `{c}` is not listed in complaint_flags"));
            }
        }
        Ok(())
    }

    pub fn kind_of(&self, column: &str) -> Option<ColumnKind> {
        self.columns.get(column).and_then(|k| ColumnKind::parse(k))
    }

    pub fn missing_tokens(&self) -> Vec<String> {
        match &self.missing_tokens {
            Some(t) => t.clone(),
            None => DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Excluded columns including the outcome and ground-truth columns,
    /// which never become features.
    pub fn all_excluded(&self) -> Vec<String> {
        let mut out = self.excluded.clone();
        let extra = self
            .outcome
            .as_ref()
            .map(|o| o.column.clone())
            .into_iter()
            .chain(self.ground_truth.clone());
        for name in extra {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    /// Outcome of one cell: `None` when missing or when no outcome is configured.
    pub fn outcome_of(&self, cell: &Cell) -> Option<bool> {
        let spec = self.outcome.as_ref()?;
        match (cell, &spec.positive) {
            (Cell::Missing, _) => None,
            (Cell::Number(v), None) => Some(*v != 0.0),
            (Cell::Number(v), Some(p)) => Some(p.trim().parse::<f64>().is_ok_and(|p| p == *v)),
            (Cell::Category(s), Some(p)) => Some(s == p),
            (Cell::Category(s), None) => Some(!matches!(s.to_ascii_lowercase().as_str(), "0" | "no" | "false" | "n")),
        }
    }
}
