//! CSV ingestion and output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use phenomap_core::dataset::{filter_by_complaint, Cell, Column, ColumnKind, Table};
use phenomap_core::Error as CoreError;

use crate::error::{PipelineError, Result};
use crate::schema::SchemaConfig;

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn read_raw(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(PipelineError::Csv {
            path: path.to_owned(),
            message: "empty file: no header row".into(),
        });
    }
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok((header, records))
}

fn infer_kind(values: impl Iterator<Item = String>, missing: &[String]) -> ColumnKind {
    let mut numeric = true;
    for v in values {
        let t = v.trim();
        if missing.iter().any(|m| m == t) {
            continue;
        }
        if t.parse::<f64>().map_or(true, |x| !x.is_finite()) {
            numeric = false;
            break;
        }
    }
    if numeric {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    }
}

/// Parses rows of raw fields under the schema. The header decides column order.
pub fn table_from_records(header: &[String], records: &[csv::StringRecord], schema: &SchemaConfig) -> Result<Table> {
    let missing = schema.missing_tokens();
    let mut columns = Vec::with_capacity(header.len());
    let mut undeclared = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if header[..i].contains(name) {
            return Err(CoreError::Schema(format!("duplicate column `{name}`")).into());
        }
        match schema.kind_of(name) {
            Some(kind) => columns.push(Column::new(name.clone(), kind)),
            None if schema.infer => {
                let kind = infer_kind(records.iter().map(|r| r.get(i).unwrap_or("").to_owned()), &missing);
                log::info!("inferred column `{name}` as {}", kind.as_str());
                columns.push(Column::new(name.clone(), kind));
            }
            None => undeclared.push(name.clone()),
        }
    }
    let mut absent: Vec<String> = schema.columns.keys().filter(|c| !header.contains(c)).cloned().collect();
    absent.extend(undeclared);
    if !absent.is_empty() {
        return Err(CoreError::SchemaMismatch(absent).into());
    }
    let mut table = Table::new(columns, schema.all_excluded(), schema.complaint_flags.clone())?;
    for r in records {
        let fields: Vec<&str> = r.iter().collect();
        table.push_raw(&fields, &missing)?;
    }
    Ok(table)
}

/// Loads a CSV under the schema and applies the complaint filter when set.
pub fn load_csv(path: &Path, schema: &SchemaConfig) -> Result<Table> {
    let (header, records) = read_raw(path)?;
    if records.is_empty() {
        return Err(PipelineError::Csv {
            path: path.to_owned(),
            message: "no data rows".into(),
        });
    }
    let table = table_from_records(&header, &records, schema)?;
    match &schema.complaint {
        Some(flag) => Ok(filter_by_complaint(&table, flag)?),
        None => Ok(table),
    }
}

/// Loads new records against the column layout of `template`. Excluded
/// columns may be omitted; columns unknown to the template are an error.
pub fn load_records(path: &Path, template: &Table, schema: &SchemaConfig) -> Result<Table> {
    let (header, records) = read_raw(path)?;
    let mut unknown = Vec::new();
    let mut positions = Vec::with_capacity(template.columns().len());
    for c in template.columns() {
        positions.push(header.iter().position(|h| h == &c.name));
    }
    for h in &header {
        if template.column_index(h).is_none() {
            unknown.push(h.clone());
        }
    }
    let missing_features: Vec<String> = template
        .feature_columns()
        .filter(|(i, _)| positions[*i].is_none())
        .map(|(_, c)| c.name.clone())
        .collect();
    unknown.extend(missing_features);
    if !unknown.is_empty() {
        return Err(CoreError::SchemaMismatch(unknown).into());
    }
    let missing = schema.missing_tokens();
    let mut table = template.empty_like();
    for r in &records {
        let index = table.row_count();
        let row = positions
            .iter()
            .zip(template.columns())
            .map(|(p, c)| match p {
                Some(p) => phenomap_core::dataset::parse_cell(r.get(*p).unwrap_or(""), c, index, &missing),
                None => Ok(Cell::Missing),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        table.push_row(row)?;
    }
    Ok(table)
}

/// Formats a cell so that reading it back yields the same cell.
pub fn format_cell(cell: &Cell) -> String {
    match cell {
        Cell::Number(v) => format!("{v}"),
        Cell::Category(s) => s.clone(),
        Cell::Missing => String::new(),
    }
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let werr = |e: csv::Error| csv_error(path, e);
    w.write_record(table.columns().iter().map(|c| c.name.as_str())).map_err(werr)?;
    for row in table.rows() {
        w.write_record(row.iter().map(format_cell)).map_err(werr)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

/// Dense class ids for the ground-truth column, assigned in sorted order of
/// the raw values.
pub fn truth_labels(table: &Table, column: &str) -> Result<Vec<u32>> {
    let idx = table
        .column_index(column)
        .ok_or_else(|| CoreError::Schema(format!("ground-truth column `{column}` not found")))?;
    let keys: Vec<String> = (0..table.row_count())
        .map(|r| match table.cell(r, idx) {
            Cell::Missing => Err(CoreError::Schema(format!("row {r}: missing ground-truth label"))),
            c => Ok(format_cell(c)),
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut ids: BTreeMap<&str, u32> = keys.iter().map(|k| (k.as_str(), 0)).collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i as u32;
    }
    Ok(keys.iter().map(|k| ids[k.as_str()]).collect())
}

pub fn outcomes(table: &Table, schema: &SchemaConfig) -> Result<Option<Vec<Option<bool>>>> {
    let Some(spec) = &schema.outcome else {
        return Ok(None);
    };
    let idx = table
        .column_index(&spec.column)
        .ok_or_else(|| CoreError::Schema(format!("outcome column `{}` not found", spec.column)))?;
    Ok(Some((0..table.row_count()).map(|r| schema.outcome_of(table.cell(r, idx))).collect()))
}

/// Writes `# <title>` followed by CSV rows.
pub fn write_commented_csv<I, R>(path: &Path, comments: &[String], header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?);
    for c in comments {
        writeln!(file, "# {c}").map_err(|e| PipelineError::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    let werr = |e: csv::Error| csv_error(path, e);
    w.write_record(header).map_err(werr)?;
    for row in rows {
        w.write_record(row).map_err(werr)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

/// Reads a file written by [`write_commented_csv`], skipping comment lines.
pub fn read_commented_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok((header, rows))
}
