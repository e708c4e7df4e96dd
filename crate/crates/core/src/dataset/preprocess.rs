//! Training-fitted feature encoding: numeric columns are mean-imputed,
//! min-max scaled to unit range and centred; categorical columns are one-hot
//! encoded and centred by the training block mean.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::table::{Cell, ColumnKind, Table};

/// Label used for the missing-value category in feature names.
pub const MISSING_CATEGORY: &str = "<missing>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureEncoder {
    Numeric {
        column: String,
        kind: ColumnKind,
        min: f64,
        max: f64,
        /// Mean of observed training values, used for imputation.
        fill: f64,
        /// Training mean after min-max scaling.
        center: f64,
    },
    Categorical {
        column: String,
        /// Sorted training vocabulary; `None` is the missing-value category.
        categories: Vec<Option<String>>,
        /// Training frequency of each category.
        centers: Vec<f64>,
    },
}

impl FeatureEncoder {
    pub fn column(&self) -> &str {
        match self {
            FeatureEncoder::Numeric { column, .. } | FeatureEncoder::Categorical { column, .. } => column,
        }
    }

    fn width(&self) -> usize {
        match self {
            FeatureEncoder::Numeric { .. } => 1,
            FeatureEncoder::Categorical { categories, .. } => categories.len(),
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            FeatureEncoder::Numeric { kind, .. } => *kind,
            FeatureEncoder::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    fn scale(min: f64, max: f64, v: f64) -> f64 {
        let range = max - min;
        if range > 0.0 {
            (v - min) / range
        } else {
            0.0
        }
    }
}

/// Something worth surfacing to a user about an encoded record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreprocessWarning {
    UnseenCategory { row: usize, column: String, value: String },
    Imputed { row: usize, column: String },
}

impl core::fmt::Display for PreprocessWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PreprocessWarning::UnseenCategory { row, column, value } => {
                write!(f, "row {row}: unseen category `{value}` in column `{column}`")
            }
            PreprocessWarning::Imputed { row, column } => {
                write!(f, "row {row}: missing value in `{column}` imputed with training mean")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    encoders: Vec<FeatureEncoder>,
    feature_names: Vec<String>,
    /// Columns that had no observed training value and emit zeros.
    empty_columns: Vec<String>,
}

impl Preprocessor {
    /// Fits vocabularies and scaling statistics on `training_rows` only.
    pub fn fit(table: &Table, training_rows: &[usize]) -> Result<Self> {
        if training_rows.is_empty() {
            return Err(Error::Parameter("cannot fit a preprocessor on zero rows".into()));
        }
        let mut encoders = Vec::new();
        let mut feature_names = Vec::new();
        let mut empty_columns = Vec::new();
        for (idx, col) in table.feature_columns() {
            match col.kind {
                ColumnKind::Numeric | ColumnKind::BinaryFlag => {
                    let observed: Vec<f64> = training_rows
                        .iter()
                        .filter_map(|&r| table.cell(r, idx).as_number())
                        .collect();
                    let enc = if observed.is_empty() {
                        log::warn!("column `{}` has no observed training values; emitting zeros", col.name);
                        empty_columns.push(col.name.clone());
                        FeatureEncoder::Numeric {
                            column: col.name.clone(),
                            kind: col.kind,
                            min: 0.0,
                            max: 0.0,
                            fill: 0.0,
                            center: 0.0,
                        }
                    } else {
                        let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
                        let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let fill = mean(&observed);
                        let scaled: Vec<f64> = training_rows
                            .iter()
                            .map(|&r| {
                                let v = table.cell(r, idx).as_number().unwrap_or(fill);
                                FeatureEncoder::scale(min, max, v)
                            })
                            .collect();
                        FeatureEncoder::Numeric {
                            column: col.name.clone(),
                            kind: col.kind,
                            min,
                            max,
                            fill,
                            center: mean(&scaled),
                        }
                    };
                    feature_names.push(col.name.clone());
                    encoders.push(enc);
                }
                ColumnKind::Categorical => {
                    let vocab: BTreeSet<Option<String>> = training_rows
                        .iter()
                        .map(|&r| category_of(table.cell(r, idx)))
                        .collect();
                    let categories: Vec<Option<String>> = vocab.into_iter().collect();
                    let mut counts = vec![0usize; categories.len()];
                    for &r in training_rows {
                        let c = category_of(table.cell(r, idx));
                        if let Ok(pos) = categories.binary_search(&c) {
                            counts[pos] += 1;
                        }
                    }
                    let n = training_rows.len() as f64;
                    let centers = counts.iter().map(|&c| c as f64 / n).collect();
                    for c in &categories {
                        feature_names.push(format!(
                            "{}={}",
                            col.name,
                            c.as_deref().unwrap_or(MISSING_CATEGORY)
                        ));
                    }
                    encoders.push(FeatureEncoder::Categorical {
                        column: col.name.clone(),
                        categories,
                        centers,
                    });
                }
            }
        }
        Ok(Self {
            encoders,
            feature_names,
            empty_columns,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn encoders(&self) -> &[FeatureEncoder] {
        &self.encoders
    }

    pub fn empty_columns(&self) -> &[String] {
        &self.empty_columns
    }

    /// Uncentred one-hot indicator for a categorical value; all zeros for a
    /// category outside the training vocabulary.
    pub fn one_hot(&self, column: &str, value: &Cell) -> Option<Vec<f64>> {
        self.encoders.iter().find_map(|e| match e {
            FeatureEncoder::Categorical {
                column: c, categories, ..
            } if c == column => {
                let mut block = vec![0.0; categories.len()];
                if let Ok(pos) = categories.binary_search(&category_of(value)) {
                    block[pos] = 1.0;
                }
                Some(block)
            }
            _ => None,
        })
    }

    /// Maps each encoder to the column index in `table`, or lists the
    /// columns that are absent or of the wrong kind.
    fn resolve(&self, table: &Table) -> Result<Vec<usize>> {
        let mut offending = Vec::new();
        let mut indices = Vec::with_capacity(self.encoders.len());
        for enc in &self.encoders {
            match table.column_index(enc.column()) {
                Some(i) if table.columns()[i].kind == enc.kind() && !table.is_excluded(enc.column()) => {
                    indices.push(i)
                }
                _ => offending.push(String::from(enc.column())),
            }
        }
        if offending.is_empty() {
            Ok(indices)
        } else {
            Err(Error::SchemaMismatch(offending))
        }
    }

    pub fn apply(&self, table: &Table, rows: &[usize]) -> Result<Matrix> {
        self.apply_with_warnings(table, rows).map(|(m, _)| m)
    }

    pub fn apply_all(&self, table: &Table) -> Result<Matrix> {
        let rows: Vec<usize> = (0..table.row_count()).collect();
        self.apply(table, &rows)
    }

    /// Encodes the listed rows. Missing numerics take the training mean and
    /// out-of-range values are scaled without clamping.
    pub fn apply_with_warnings(&self, table: &Table, rows: &[usize]) -> Result<(Matrix, Vec<PreprocessWarning>)> {
        let indices = self.resolve(table)?;
        let width = self.feature_count();
        let mut out = Matrix::zeros(rows.len(), width);
        let mut warnings = Vec::new();
        for (o, &r) in rows.iter().enumerate() {
            let dst = out.row_mut(o);
            let mut offset = 0;
            for (enc, &ci) in self.encoders.iter().zip(&indices) {
                let cell = table.cell(r, ci);
                match enc {
                    FeatureEncoder::Numeric {
                        column,
                        min,
                        max,
                        fill,
                        center,
                        ..
                    } => {
                        let v = match cell.as_number() {
                            Some(v) => v,
                            None => {
                                warnings.push(PreprocessWarning::Imputed {
                                    row: r,
                                    column: column.clone(),
                                });
                                *fill
                            }
                        };
                        dst[offset] = if max > min {
                            FeatureEncoder::scale(*min, *max, v) - center
                        } else {
                            0.0
                        };
                    }
                    FeatureEncoder::Categorical {
                        column,
                        categories,
                        centers,
                    } => {
                        let cat = category_of(cell);
                        let hit = categories.binary_search(&cat).ok();
                        if hit.is_none() {
                            log::warn!("unseen category in column `{column}`");
                            warnings.push(PreprocessWarning::UnseenCategory {
                                row: r,
                                column: column.clone(),
                                value: cat.unwrap_or_else(|| String::from(MISSING_CATEGORY)),
                            });
                        }
                        for (k, c) in centers.iter().enumerate() {
                            let raw = if hit == Some(k) { 1.0 } else { 0.0 };
                            dst[offset + k] = raw - c;
                        }
                    }
                }
                offset += enc.width();
            }
        }
        Ok((out, warnings))
    }
}

fn category_of(cell: &Cell) -> Option<String> {
    match cell {
        Cell::Category(s) => Some(s.clone()),
        Cell::Number(v) => Some(format!("{v}")),
        Cell::Missing => None,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::table::{Column, DEFAULT_MISSING_TOKENS};
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn table(rows: &[(&str, &str)]) -> Table {
        let mut t = Table::new(
            vec![
                Column::new("x", ColumnKind::Numeric),
                Column::new("c", ColumnKind::Categorical),
                Column::new("outcome", ColumnKind::Categorical),
            ],
            vec!["outcome".into()],
            vec![],
        )
        .unwrap();
        let missing: Vec<String> = DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect();
        for (x, c) in rows {
            t.push_raw(&[*x, *c, "admit"], &missing).unwrap();
        }
        t
    }

    #[test]
    fn min_max_then_center() {
        let t = table(&[("2", "A"), ("4", "B"), ("6", "A")]);
        let p = Preprocessor::fit(&t, &[0, 1, 2]).unwrap();
        let m = p.apply_all(&t).unwrap();
        assert_eq!(m.column(0), [-0.5, 0.0, 0.5]);
        assert_eq!(p.feature_names(), ["x", "c=A", "c=B"]);
        assert!(!p.feature_names().iter().any(|n| n.starts_with("outcome")));
    }

    #[test]
    fn out_of_range_test_value_is_not_clamped() {
        let t = table(&[("2", "A"), ("4", "B"), ("6", "A"), ("8", "A")]);
        let p = Preprocessor::fit(&t, &[0, 1, 2]).unwrap();
        let m = p.apply(&t, &[3]).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn one_hot_blocks() {
        let t = table(&[("1", "A"), ("2", "B"), ("3", "C")]);
        let p = Preprocessor::fit(&t, &[0, 1]).unwrap();
        assert_eq!(p.one_hot("c", &Cell::Category("A".into())).unwrap(), [1.0, 0.0]);
        assert_eq!(p.one_hot("c", &Cell::Category("C".into())).unwrap(), [0.0, 0.0]);
        // centred output for the unseen category is the negated training block mean
        let (m, w) = p.apply_with_warnings(&t, &[2]).unwrap();
        assert_eq!(&m.row(0)[1..], [-0.5, -0.5]);
        assert!(matches!(&w[0], PreprocessWarning::UnseenCategory { value, .. } if value == "C"));
    }

    #[test]
    fn missing_numeric_imputed_with_training_mean() {
        let t = table(&[("1", "A"), ("", "A"), ("3", "A")]);
        let p = Preprocessor::fit(&t, &[0, 1, 2]).unwrap();
        match &p.encoders()[0] {
            FeatureEncoder::Numeric { fill, .. } => assert_eq!(*fill, 2.0),
            _ => unreachable!(),
        }
        let m = p.apply_all(&t).unwrap();
        assert_eq!(m.column(0), [-0.5, 0.0, 0.5]);
    }

    #[test]
    fn constant_and_empty_columns_emit_zeros() {
        let t = table(&[("5", "A"), ("5", "A"), ("5", "A")]);
        let p = Preprocessor::fit(&t, &[0, 1, 2]).unwrap();
        let m = p.apply_all(&t).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));

        let t = table(&[("", "A"), ("NA", "B")]);
        let p = Preprocessor::fit(&t, &[0, 1]).unwrap();
        assert_eq!(p.empty_columns(), ["x"]);
        assert_eq!(p.apply_all(&t).unwrap().column(0), [0.0, 0.0]);
    }

    #[test]
    fn missing_category_is_its_own_token() {
        let t = table(&[("1", "A"), ("2", ""), ("3", "A")]);
        let p = Preprocessor::fit(&t, &[0, 1, 2]).unwrap();
        // the missing token sorts ahead of observed values
        assert_eq!(p.feature_names(), ["x", "c=<missing>", "c=A"]);
    }

    #[test]
    fn schema_mismatch_lists_columns() {
        let t = table(&[("1", "A"), ("2", "B")]);
        let p = Preprocessor::fit(&t, &[0, 1]).unwrap();
        let other = Table::new(vec![Column::new("y", ColumnKind::Numeric)], vec![], vec![]).unwrap();
        assert_eq!(
            p.apply_all(&other).unwrap_err(),
            Error::SchemaMismatch(vec!["x".into(), "c".into()])
        );
    }

    proptest! {
        #[test]
        fn training_output_is_unit_range_and_centred(
            values in proptest::collection::vec(proptest::option::weighted(0.8, -1e3f64..1e3), 3..60),
            cats in proptest::collection::vec(0u8..4, 60),
        ) {
            let rows: Vec<(String, String)> = values
                .iter()
                .zip(&cats)
                .map(|(v, c)| (v.map(|v| v.to_string()).unwrap_or_default(), alloc::format!("k{c}")))
                .collect();
            let refs: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let t = table(&refs);
            let all: Vec<usize> = (0..t.row_count()).collect();
            let p = Preprocessor::fit(&t, &all).unwrap();
            let m = p.apply_all(&t).unwrap();
            for j in 0..m.cols() {
                let col = m.column(j);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                prop_assert!(mean.abs() <= 1e-9);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(hi - lo <= 1.0 + 1e-12);
            }
            prop_assert_eq!(&m, &p.apply_all(&t).unwrap());
        }
    }
}
