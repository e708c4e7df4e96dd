use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    BinaryFlag,
}

impl ColumnKind {
    /// Accepts the spellings used in schema files.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "number" | "float" | "int" | "integer" => Some(Self::Numeric),
            "categorical" | "category" | "text" | "string" => Some(Self::Categorical),
            "binary" | "binary_flag" | "binary-flag" | "flag" | "bool" | "boolean" => {
                Some(Self::BinaryFlag)
            }
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Numeric => "numeric",
            Self::Categorical => "categorical",
            Self::BinaryFlag => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Number(f64),
    Category(String),
    Missing,
}

impl Cell {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

pub const DEFAULT_MISSING_TOKENS: [&str; 3] = ["", "NA", "NaN"];

/// Parses one raw field according to the column kind.
pub fn parse_cell(raw: &str, column: &Column, row: usize, missing: &[String]) -> Result<Cell> {
    let trimmed = raw.trim();
    if missing.iter().any(|m| m == raw || m == trimmed) {
        return Ok(Cell::Missing);
    }
    let fail = |expected| Error::CellParse {
        row,
        column: column.name.clone(),
        value: raw.to_owned(),
        expected,
    };
    match column.kind {
        ColumnKind::Categorical => Ok(Cell::Category(trimmed.to_owned())),
        ColumnKind::Numeric => match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Cell::Number(v)),
            _ => Err(fail("a finite number")),
        },
        ColumnKind::BinaryFlag => match trimmed.to_ascii_lowercase().as_str() {
            "1" | "1.0" | "true" | "yes" | "y" | "t" => Ok(Cell::Number(1.0)),
            "0" | "0.0" | "false" | "no" | "n" | "f" => Ok(Cell::Number(0.0)),
            _ => Err(fail("a binary flag (0/1)")),
        },
    }
}

/// Rows of typed cells under an ordered column schema.
///
/// Excluded columns (outcomes, triage scores, ground-truth labels) are kept
/// in the table for reporting but never appear in [`Table::feature_columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    columns: Vec<Column>,
    rows: Vec<Vec<Cell>>,
    excluded: Vec<String>,
    complaint_flags: Vec<String>,
}

impl Table {
    pub fn new(columns: Vec<Column>, excluded: Vec<String>, complaint_flags: Vec<String>) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let find = |name: &String| columns.iter().find(|c| &c.name == name);
        for name in &excluded {
            if find(name).is_none() {
                return Err(Error::Schema(format!("excluded column `{name}` not in schema")));
            }
        }
        for name in &complaint_flags {
            match find(name) {
                None => {
                    return Err(Error::Schema(format!(
                        "complaint flag column `{name}` not in schema"
                    )))
                }
                Some(c) if c.kind != ColumnKind::BinaryFlag => {
                    return Err(Error::Schema(format!(
                        "complaint flag column `{name}` must be a binary flag"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            columns,
            rows: Vec::new(),
            excluded,
            complaint_flags,
        })
    }

    /// An empty table sharing this table's schema.
    pub fn empty_like(&self) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: Vec::new(),
            excluded: self.excluded.clone(),
            complaint_flags: self.complaint_flags.clone(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        let index = self.rows.len();
        if row.len() != self.columns.len() {
            return Err(Error::RowArity {
                row: index,
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        for (cell, col) in row.iter().zip(&self.columns) {
            match (cell, col.kind) {
                (Cell::Number(v), _) if !v.is_finite() => {
                    return Err(Error::CellParse {
                        row: index,
                        column: col.name.clone(),
                        value: v.to_string(),
                        expected: "a finite number",
                    })
                }
                (Cell::Category(_), ColumnKind::Numeric | ColumnKind::BinaryFlag)
                | (Cell::Number(_), ColumnKind::Categorical) => {
                    return Err(Error::Schema(format!(
                        "row {index}: cell type does not match {} column `{}`",
                        col.kind.as_str(),
                        col.name
                    )))
                }
                _ => {}
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Parses and appends a row of raw string fields.
    pub fn push_raw<S: AsRef<str>>(&mut self, fields: &[S], missing: &[String]) -> Result<()> {
        let index = self.rows.len();
        if fields.len() != self.columns.len() {
            return Err(Error::RowArity {
                row: index,
                expected: self.columns.len(),
                found: fields.len(),
            });
        }
        let row = fields
            .iter()
            .zip(&self.columns)
            .map(|(f, c)| parse_cell(f.as_ref(), c, index, missing))
            .collect::<Result<Vec<_>>>()?;
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn excluded(&self) -> &[String] {
        &self.excluded
    }

    pub fn complaint_flags(&self) -> &[String] {
        &self.complaint_flags
    }

    pub fn is_excluded(&self, name: &str) -> bool {
        self.excluded.iter().any(|e| e == name)
    }

    /// Columns eligible for feature matrices, in schema order.
    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &Column)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(_, c)| !self.is_excluded(&c.name))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn cell(&self, row: usize, column: usize) -> &Cell {
        &self.rows[row][column]
    }

    /// New table containing the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Table {
        let mut t = self.empty_like();
        t.rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        t
    }

    /// Values of a column as numbers; categories and missing cells map to `None`.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[idx].as_number()).collect())
    }
}

/// Rows where the named complaint flag is set.
///
/// A visit carrying several complaint flags lands in every matching subset.
/// An empty result is returned as an empty table with a logged warning.
pub fn filter_by_complaint(table: &Table, flag_column: &str) -> Result<Table> {
    let idx = table
        .column_index(flag_column)
        .ok_or_else(|| Error::Schema(format!("complaint column `{flag_column}` not found")))?;
    if table.columns()[idx].kind != ColumnKind::BinaryFlag {
        return Err(Error::Schema(format!(
            "complaint column `{flag_column}` is not a binary flag"
        )));
    }
    let keep: Vec<usize> = (0..table.row_count())
        .filter(|&r| matches!(table.cell(r, idx), Cell::Number(v) if *v != 0.0))
        .collect();
    if keep.is_empty() {
        log::warn!("no rows have complaint flag `{flag_column}` set");
    }
    Ok(table.select_rows(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn missing() -> Vec<String> {
        DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect()
    }

    fn complaint_table() -> Table {
        let cols = vec![
            Column::new("age", ColumnKind::Numeric),
            Column::new("cc_chestpain", ColumnKind::BinaryFlag),
            Column::new("cc_falls", ColumnKind::BinaryFlag),
            Column::new("disposition", ColumnKind::Categorical),
        ];
        let mut t = Table::new(
            cols,
            vec!["disposition".into()],
            vec!["cc_chestpain".into(), "cc_falls".into()],
        )
        .unwrap();
        for (i, (cp, fa)) in [(1, 0), (1, 1), (0, 0), (0, 1), (1, 0), (0, 0), (0, 0), (1, 0), (0, 0), (0, 0)]
            .iter()
            .enumerate()
        {
            let age = alloc::format!("{}", 20 + i);
            let cp = alloc::format!("{cp}");
            let fa = alloc::format!("{fa}");
            t.push_raw(&[age.as_str(), &cp, &fa, "admit"], &missing()).unwrap();
        }
        t
    }

    #[test]
    fn excluded_columns_are_not_features() {
        let t = complaint_table();
        let names: Vec<&str> = t.feature_columns().map(|(_, c)| c.name.as_str()).collect();
        assert_eq!(names, ["age", "cc_chestpain", "cc_falls"]);
    }

    #[test]
    fn empty_cell_is_missing() {
        let col = Column::new("age", ColumnKind::Numeric);
        assert_eq!(parse_cell("", &col, 0, &missing()).unwrap(), Cell::Missing);
        assert_eq!(parse_cell("NA", &col, 0, &missing()).unwrap(), Cell::Missing);
        assert!(parse_cell("inf", &col, 3, &missing()).is_err());
    }

    #[test]
    fn arity_error_names_row() {
        let mut t = complaint_table();
        let err = t.push_raw(&["1", "0"], &missing()).unwrap_err();
        assert_eq!(
            err,
            Error::RowArity {
                row: 10,
                expected: 4,
                found: 2
            }
        );
    }

    #[test]
    fn filter_keeps_flagged_rows_and_overlaps() {
        let t = complaint_table();
        let chest = filter_by_complaint(&t, "cc_chestpain").unwrap();
        assert_eq!(chest.row_count(), 4);
        let falls = filter_by_complaint(&t, "cc_falls").unwrap();
        assert_eq!(falls.row_count(), 2);
        // the visit with both complaints is in both subsets
        let both = t.row(1).to_vec();
        assert!(chest.rows().contains(&both));
        assert!(falls.rows().contains(&both));
    }

    #[test]
    fn filter_with_no_match_is_empty_not_error() {
        let mut t = complaint_table();
        t.rows.iter_mut().for_each(|r| r[2] = Cell::Number(0.0));
        let falls = filter_by_complaint(&t, "cc_falls").unwrap();
        assert!(falls.is_empty());
    }

    #[test]
    fn filter_on_absent_or_non_flag_column_errors() {
        let t = complaint_table();
        assert!(matches!(filter_by_complaint(&t, "nope"), Err(Error::Schema(_))));
        assert!(matches!(filter_by_complaint(&t, "age"), Err(Error::Schema(_))));
    }
}
