//! Loading, cleaning, encoding and normalization of raw loan tables.
//!
//! The canonical [`Dataset`] stores every cell as an `f64`. Columns are
//! ordered sensitive first, then features, then the single label column,
//! so the label is always the last cell of a row and the feature vector a
//! classifier sees is the row prefix before it.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell values treated as missing when no marker set is configured.
pub const DEFAULT_MISSING_MARKERS: [&str; 3] = ["", "Exempt", "NA"];

/// Default column-missing threshold.
pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header is missing schema column `{0}`")]
    HeaderMismatch(String),
    #[error("header lists column `{0}` more than once")]
    DuplicateHeader(String),
    #[error("row {row} has {found} cells, header has {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("missing threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("required column `{0}` exceeds the missing threshold")]
    RequiredColumnDropped(String),
    #[error("no rows survive cleaning")]
    NoRows,
    #[error("column `{column}` row {row}: cannot parse `{value}` as a number")]
    NotNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column `{column}` row {row}: `{value}` is not in the column domain")]
    OutOfDomain {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column `{column}` row {row}: missing value in a clean table")]
    UnexpectedMissing { column: String, row: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Feature,
    Sensitive,
    Label,
}

/// One column of a schema. A column with a `domain` is categorical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn numeric_feature(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Feature,
            domain: None,
        }
    }

    pub fn categorical(
        name: impl Into<String>,
        kind: ColumnKind,
        domain: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            domain: Some(domain.into_iter().map(Into::into).collect()),
        }
    }

    /// A label column whose cells are literally `0` or `1`.
    pub fn binary_label(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Label,
            domain: None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.domain.is_some()
    }
}

/// Checks the schema-level invariants: unique names, exactly one label,
/// categorical sensitive columns with at least two values, duplicate-free
/// domains, and a two-value domain on a categorical label.
pub fn validate_schema(columns: &[ColumnSpec]) -> Result<(), TabularError> {
    let mut names = HashSet::new();
    let mut labels = 0;
    for col in columns {
        if col.name.is_empty() {
            return Err(TabularError::Schema("column with empty name".into()));
        }
        if !names.insert(col.name.as_str()) {
            return Err(TabularError::Schema(format!(
                "column `{}` declared twice",
                col.name
            )));
        }
        if let Some(domain) = &col.domain {
            let distinct: HashSet<&String> = domain.iter().collect();
            if distinct.len() != domain.len() {
                return Err(TabularError::Schema(format!(
                    "domain of `{}` has duplicates",
                    col.name
                )));
            }
            if domain.is_empty() {
                return Err(TabularError::Schema(format!(
                    "domain of `{}` is empty",
                    col.name
                )));
            }
        }
        match col.kind {
            ColumnKind::Label => {
                labels += 1;
                if let Some(domain) = &col.domain {
                    if domain.len() != 2 {
                        return Err(TabularError::Schema(format!(
                            "label `{}` needs exactly two domain values (unfavorable, favorable)",
                            col.name
                        )));
                    }
                }
            }
            ColumnKind::Sensitive => match &col.domain {
                Some(d) if d.len() >= 2 => {}
                _ => {
                    return Err(TabularError::Schema(format!(
                        "sensitive column `{}` needs a domain of at least two values",
                        col.name
                    )))
                }
            },
            ColumnKind::Feature => {}
        }
    }
    if labels != 1 {
        return Err(TabularError::Schema(format!(
            "expected exactly one label column, found {labels}"
        )));
    }
    Ok(())
}

/// String cells as read from a CSV file. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    columns: Vec<ColumnSpec>,
    rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn new(
        columns: Vec<ColumnSpec>,
        rows: Vec<Vec<Option<String>>>,
    ) -> Result<Self, TabularError> {
        validate_schema(&columns)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TabularError::RaggedRow {
                    row: i,
                    found: row.len(),
                    expected: columns.len(),
                });
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Option<String>>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Missing-cell count per column, in column order.
    pub fn missing_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.columns.len()];
        for row in &self.rows {
            for (c, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    pub fn is_missing(&self, row: usize, column: usize) -> bool {
        self.rows[row][column].is_none()
    }

    /// Writes cells verbatim; missing cells become empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TabularError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
        }
        wtr.flush().map_err(|source| TabularError::Io {
            path: "<csv output>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Loads a CSV file. Header order is free; columns not named by the schema
/// are ignored.
pub fn load_csv(
    path: &Path,
    schema: &[ColumnSpec],
    missing_markers: &[String],
) -> Result<RawTable, TabularError> {
    let file = File::open(path).map_err(|source| TabularError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema, missing_markers)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &[ColumnSpec],
    missing_markers: &[String],
) -> Result<RawTable, TabularError> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if position.insert(name.trim(), i).is_some() {
            return Err(TabularError::DuplicateHeader(name.trim().to_string()));
        }
    }
    let source_index = schema
        .iter()
        .map(|col| {
            position
                .get(col.name.as_str())
                .copied()
                .ok_or_else(|| TabularError::HeaderMismatch(col.name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let markers: HashSet<&str> = missing_markers.iter().map(|m| m.trim()).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(TabularError::RaggedRow {
                row: i,
                found: record.len(),
                expected: header.len(),
            });
        }
        let row = source_index
            .iter()
            .map(|&src| {
                let cell = record[src].trim();
                (!markers.contains(cell)).then(|| cell.to_string())
            })
            .collect();
        rows.push(row);
    }
    Ok(RawTable {
        columns: schema.to_vec(),
        rows,
    })
}

/// Drops columns whose missing fraction exceeds `column_missing_threshold`,
/// then rows with any missing cell, then rows holding a value outside a
/// declared column domain.
pub fn clean(raw: &RawTable, column_missing_threshold: f64) -> Result<RawTable, TabularError> {
    if !(0.0..=1.0).contains(&column_missing_threshold) {
        return Err(TabularError::BadThreshold(column_missing_threshold));
    }
    if raw.rows.is_empty() {
        return Err(TabularError::NoRows);
    }
    let n = raw.rows.len() as f64;
    let missing = raw.missing_counts();
    let mut keep_cols = Vec::new();
    for (c, col) in raw.columns.iter().enumerate() {
        if missing[c] as f64 / n > column_missing_threshold {
            if col.kind != ColumnKind::Feature {
                return Err(TabularError::RequiredColumnDropped(col.name.clone()));
            }
        } else {
            keep_cols.push(c);
        }
    }

    let columns: Vec<ColumnSpec> = keep_cols.iter().map(|&c| raw.columns[c].clone()).collect();
    let domains: Vec<Option<HashSet<&str>>> = columns
        .iter()
        .map(|col| {
            col.domain
                .as_ref()
                .map(|d| d.iter().map(String::as_str).collect())
        })
        .collect();

    let rows: Vec<Vec<Option<String>>> = raw
        .rows
        .iter()
        .filter_map(|row| {
            let projected: Vec<Option<String>> =
                keep_cols.iter().map(|&c| row[c].clone()).collect();
            let admissible = projected
                .iter()
                .zip(&domains)
                .all(|(cell, domain)| match cell {
                    None => false,
                    Some(v) => domain.as_ref().is_none_or(|d| d.contains(v.as_str())),
                });
            admissible.then_some(projected)
        })
        .collect();

    if rows.is_empty() {
        return Err(TabularError::NoRows);
    }
    Ok(RawTable { columns, rows })
}

/// How a column's stored `f64` relates to its source string.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnCodec {
    /// Sensitive column: stored value is the integer code (domain index).
    SensitiveCode { values: Vec<String> },
    /// Categorical feature: code scaled into [0, 1] as `code / (k - 1)`.
    CategoricalFeature { values: Vec<String> },
    /// Numeric feature scaled as `(x - min) / (max - min)`; zero when `min == max`.
    Numeric { min: f64, max: f64 },
    /// Label column; `values` are (unfavorable, favorable) when categorical.
    Label { values: Option<[String; 2]> },
}

impl ColumnCodec {
    /// The string → integer code table for categorical columns.
    pub fn code_table(&self) -> Option<&[String]> {
        match self {
            Self::SensitiveCode { values } | Self::CategoricalFeature { values } => Some(values),
            Self::Label { values: Some(v) } => Some(v),
            _ => None,
        }
    }

    /// Maps a stored value back to its source string.
    pub fn decode(&self, value: f64) -> String {
        match self {
            Self::SensitiveCode { values } => values[value.round() as usize].clone(),
            Self::CategoricalFeature { values } => {
                let k = values.len();
                let code = if k <= 1 {
                    0
                } else {
                    (value * (k - 1) as f64).round() as usize
                };
                values[code.min(k - 1)].clone()
            }
            Self::Numeric { min, max } => {
                if max > min {
                    (min + value * (max - min)).to_string()
                } else {
                    min.to_string()
                }
            }
            Self::Label { values: Some(v) } => v[usize::from(value >= 0.5)].clone(),
            Self::Label { values: None } => if value >= 0.5 { "1" } else { "0" }.to_string(),
        }
    }

    fn encode(&self, column: &str, row: usize, cell: &str) -> Result<f64, TabularError> {
        let out_of_domain = || TabularError::OutOfDomain {
            column: column.to_string(),
            row,
            value: cell.to_string(),
        };
        match self {
            Self::SensitiveCode { values } => values
                .iter()
                .position(|v| v == cell)
                .map(|c| c as f64)
                .ok_or_else(out_of_domain),
            Self::CategoricalFeature { values } => {
                let code = values
                    .iter()
                    .position(|v| v == cell)
                    .ok_or_else(out_of_domain)?;
                Ok(scale_code(code, values.len()))
            }
            Self::Numeric { min, max } => {
                let x = parse_number(column, row, cell)?;
                Ok(if max > min {
                    (x - min) / (max - min)
                } else {
                    0.0
                })
            }
            Self::Label { values: Some(v) } => v
                .iter()
                .position(|s| s == cell)
                .map(|c| c as f64)
                .ok_or_else(out_of_domain),
            Self::Label { values: None } => {
                let x = parse_number(column, row, cell)?;
                if x == 0.0 || x == 1.0 {
                    Ok(x)
                } else {
                    Err(out_of_domain())
                }
            }
        }
    }
}

fn scale_code(code: usize, k: usize) -> f64 {
    if k <= 1 {
        0.0
    } else {
        code as f64 / (k - 1) as f64
    }
}

fn parse_number(column: &str, row: usize, cell: &str) -> Result<f64, TabularError> {
    cell.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| TabularError::NotNumeric {
            column: column.to_string(),
            row,
            value: cell.to_string(),
        })
}

/// Numeric-encoded table in canonical column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    codecs: Vec<ColumnCodec>,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from already-encoded rows, checking every invariant.
    pub fn from_parts(
        columns: Vec<ColumnSpec>,
        codecs: Vec<ColumnCodec>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, TabularError> {
        let ds = Self {
            columns,
            codecs,
            rows,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Same schema and codecs, different rows. Rows are validated.
    pub fn with_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self, TabularError> {
        let ds = Self {
            columns: self.columns.clone(),
            codecs: self.codecs.clone(),
            rows,
        };
        ds.validate_rows()?;
        Ok(ds)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            codecs: self.codecs.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn codecs(&self) -> &[ColumnCodec] {
        &self.codecs
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_index(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Names of the classifier inputs: every column except the label.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns[..self.label_index()]
            .iter()
            .map(|c| c.name.clone())
            .collect()
    }

    /// Classifier input of row `i`.
    pub fn features(&self, i: usize) -> &[f64] {
        &self.rows[i][..self.label_index()]
    }

    pub fn label(&self, i: usize) -> u8 {
        label_of(&self.rows[i])
    }

    /// Indices of non-sensitive feature columns.
    pub fn feature_columns(&self) -> Vec<usize> {
        self.kind_indices(ColumnKind::Feature)
    }

    /// Indices of numeric (min-max scaled) feature columns.
    pub fn numeric_feature_columns(&self) -> Vec<usize> {
        self.codecs
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, ColumnCodec::Numeric { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sensitive_columns(&self) -> Vec<usize> {
        self.kind_indices(ColumnKind::Sensitive)
    }

    fn kind_indices(&self, kind: ColumnKind) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Count of (rejected, accepted) rows.
    pub fn label_counts(&self) -> (usize, usize) {
        let accepted = self.rows.iter().filter(|r| label_of(r) == 1).count();
        (self.rows.len() - accepted, accepted)
    }

    pub fn decode_cell(&self, column: usize, value: f64) -> String {
        self.codecs[column].decode(value)
    }

    /// Checks schema and row invariants.
    pub fn validate(&self) -> Result<(), TabularError> {
        validate_schema(&self.columns)?;
        if self.codecs.len() != self.columns.len() {
            return Err(TabularError::Invalid(
                "one codec per column required".into(),
            ));
        }
        let kinds: Vec<ColumnKind> = self.columns.iter().map(|c| c.kind).collect();
        let canonical = kinds.windows(2).all(|w| rank(w[0]) <= rank(w[1]))
            && kinds.last() == Some(&ColumnKind::Label);
        if !canonical {
            return Err(TabularError::Invalid(
                "columns must be ordered sensitive, features, label".into(),
            ));
        }
        for (col, codec) in self.columns.iter().zip(&self.codecs) {
            let ok = match (col.kind, codec) {
                (ColumnKind::Sensitive, ColumnCodec::SensitiveCode { values }) => {
                    Some(values) == col.domain.as_ref()
                }
                (ColumnKind::Feature, ColumnCodec::CategoricalFeature { values }) => {
                    Some(values) == col.domain.as_ref()
                }
                (ColumnKind::Feature, ColumnCodec::Numeric { min, max }) => {
                    col.domain.is_none() && min.is_finite() && max.is_finite() && min <= max
                }
                (ColumnKind::Label, ColumnCodec::Label { values }) => {
                    values.as_ref().map(|v| v.to_vec()) == col.domain
                }
                _ => false,
            };
            if !ok {
                return Err(TabularError::Invalid(format!(
                    "codec does not match column `{}`",
                    col.name
                )));
            }
        }
        self.validate_rows()
    }

    fn validate_rows(&self) -> Result<(), TabularError> {
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(TabularError::RaggedRow {
                    row: r,
                    found: row.len(),
                    expected: self.columns.len(),
                });
            }
            for (c, (&v, codec)) in row.iter().zip(&self.codecs).enumerate() {
                let ok = match codec {
                    ColumnCodec::SensitiveCode { values } => {
                        v.fract() == 0.0 && v >= 0.0 && (v as usize) < values.len()
                    }
                    ColumnCodec::CategoricalFeature { .. } | ColumnCodec::Numeric { .. } => {
                        (0.0..=1.0).contains(&v)
                    }
                    ColumnCodec::Label { .. } => v == 0.0 || v == 1.0,
                };
                if !ok {
                    return Err(TabularError::Invalid(format!(
                        "row {r} column `{}` holds invalid value {v}",
                        self.columns[c].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the dataset as CSV with categorical cells decoded and numeric
    /// cells mapped back to their original units.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TabularError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            wtr.write_record(
                row.iter()
                    .zip(&self.codecs)
                    .map(|(&v, codec)| codec.decode(v)),
            )?;
        }
        wtr.flush().map_err(|source| TabularError::Io {
            path: "<csv output>".into(),
            source,
        })?;
        Ok(())
    }
}

pub(crate) fn label_of(row: &[f64]) -> u8 {
    u8::from(row[row.len() - 1] >= 0.5)
}

fn rank(kind: ColumnKind) -> u8 {
    match kind {
        ColumnKind::Sensitive => 0,
        ColumnKind::Feature => 1,
        ColumnKind::Label => 2,
    }
}

/// Encodes a clean table. Categorical cells map to their domain index,
/// numeric features are min-max scaled, sensitive codes stay unscaled.
pub fn encode_and_normalize(raw: &RawTable) -> Result<Dataset, TabularError> {
    validate_schema(&raw.columns)?;
    let mut order: Vec<usize> = (0..raw.columns.len()).collect();
    order.sort_by_key(|&c| rank(raw.columns[c].kind));

    let mut columns = Vec::with_capacity(order.len());
    let mut codecs = Vec::with_capacity(order.len());
    for &c in &order {
        let col = &raw.columns[c];
        let codec = match (col.kind, &col.domain) {
            (ColumnKind::Sensitive, Some(d)) => ColumnCodec::SensitiveCode { values: d.clone() },
            (ColumnKind::Feature, Some(d)) => ColumnCodec::CategoricalFeature { values: d.clone() },
            (ColumnKind::Feature, None) => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for (r, row) in raw.rows.iter().enumerate() {
                    let cell =
                        row[c]
                            .as_deref()
                            .ok_or_else(|| TabularError::UnexpectedMissing {
                                column: col.name.clone(),
                                row: r,
                            })?;
                    let x = parse_number(&col.name, r, cell)?;
                    min = min.min(x);
                    max = max.max(x);
                }
                if raw.rows.is_empty() {
                    min = 0.0;
                    max = 0.0;
                }
                ColumnCodec::Numeric { min, max }
            }
            (ColumnKind::Label, Some(d)) => ColumnCodec::Label {
                values: Some([d[0].clone(), d[1].clone()]),
            },
            (ColumnKind::Label, None) => ColumnCodec::Label { values: None },
            (ColumnKind::Sensitive, None) => unreachable!("validated schema"),
        };
        columns.push(col.clone());
        codecs.push(codec);
    }

    let mut rows = Vec::with_capacity(raw.rows.len());
    for (r, row) in raw.rows.iter().enumerate() {
        let encoded = order
            .iter()
            .zip(&codecs)
            .map(|(&c, codec)| {
                let name = &raw.columns[c].name;
                let cell = row[c]
                    .as_deref()
                    .ok_or_else(|| TabularError::UnexpectedMissing {
                        column: name.clone(),
                        row: r,
                    })?;
                codec.encode(name, r, cell)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(encoded);
    }
    Dataset::from_parts(columns, codecs, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn markers() -> Vec<String> {
        DEFAULT_MISSING_MARKERS
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn loan_schema() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::categorical("race", ColumnKind::Sensitive, ["White", "Black", "Joint"]),
            ColumnSpec::categorical("sex", ColumnKind::Sensitive, ["Female", "Male", "Joint"]),
            ColumnSpec::numeric_feature("income"),
            ColumnSpec::binary_label("approved"),
        ]
    }

    fn read(text: &str) -> Result<RawTable, TabularError> {
        read_csv(text.as_bytes(), &loan_schema(), &markers())
    }

    #[test]
    fn loads_rows_in_file_order() {
        let raw = read(
            "sex,approved,race,income\n\
             Male,1,White,50\n\
             Female,0,Black,70\n\
             Joint,1,Joint,90\n",
        )
        .unwrap();
        assert_eq!(raw.n_rows(), 3);
        assert_eq!(raw.rows()[1][0].as_deref(), Some("Black"));
        assert_eq!(raw.rows()[2][2].as_deref(), Some("90"));
    }

    #[test]
    fn header_lacking_a_schema_column_is_rejected() {
        let err = read("race,sex,approved\nWhite,Male,1\n").unwrap_err();
        assert!(matches!(err, TabularError::HeaderMismatch(c) if c == "income"));
    }

    #[test]
    fn exempt_and_na_are_missing() {
        let raw = read(
            "race,sex,income,approved\n\
             White,Male,50,1\n\
             White,Male,Exempt,1\n\
             NA,Male,,0\n",
        )
        .unwrap();
        assert!(raw.is_missing(1, 2));
        assert!(!raw.is_missing(1, 0));
        assert!(raw.is_missing(2, 0) && raw.is_missing(2, 2));
        assert_eq!(raw.missing_counts(), vec![1, 0, 2, 0]);
    }

    #[test]
    fn ragged_row_reports_its_index() {
        let err = read("race,sex,income,approved\nWhite,Male,50,1\nWhite,Male,50\n").unwrap_err();
        assert!(matches!(err, TabularError::RaggedRow { row: 1, .. }));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_csv(
            Path::new("/nonexistent/loans.csv"),
            &loan_schema(),
            &markers(),
        )
        .unwrap_err();
        assert!(matches!(err, TabularError::Io { .. }));
    }

    #[test]
    fn sparse_feature_column_is_dropped() {
        let mut schema = loan_schema();
        schema.insert(2, ColumnSpec::numeric_feature("debt"));
        let mut text = String::from("race,sex,debt,income,approved\n");
        for i in 0..10 {
            let debt = if i < 3 {
                "NA".to_string()
            } else {
                i.to_string()
            };
            text.push_str(&format!("White,Male,{debt},{i},1\n"));
        }
        let raw = read_csv(text.as_bytes(), &schema, &markers()).unwrap();
        let cleaned = clean(&raw, 0.25).unwrap();
        assert!(cleaned.columns().iter().all(|c| c.name != "debt"));
        assert_eq!(cleaned.n_rows(), 10);
    }

    #[test]
    fn sparse_label_column_is_an_error() {
        let raw = read("race,sex,income,approved\nWhite,Male,1,\nWhite,Male,2,1\n").unwrap();
        assert!(matches!(
            clean(&raw, 0.25),
            Err(TabularError::RequiredColumnDropped(c)) if c == "approved"
        ));
    }

    #[test]
    fn clean_without_missing_cells_is_identity() {
        let raw = read("race,sex,income,approved\nWhite,Male,1,1\nBlack,Joint,2,0\n").unwrap();
        assert_eq!(clean(&raw, 0.25).unwrap(), raw);
    }

    #[test]
    fn out_of_domain_race_rows_are_removed() {
        let races = [
            "White", "Asian", "Black", "Joint", "White", "Black", "Asian", "White", "Joint",
            "Black",
        ];
        let mut text = String::from("race,sex,income,approved\n");
        for (i, r) in races.iter().enumerate() {
            text.push_str(&format!("{r},Male,{i},1\n"));
        }
        let raw = read(&text).unwrap();
        let cleaned = clean(&raw, 0.25).unwrap();
        let expected = races.iter().filter(|r| **r != "Asian").count();
        assert_eq!(cleaned.n_rows(), expected);
        assert_eq!(expected, 8);
    }

    #[test]
    fn all_rows_filtered_is_an_error() {
        let raw = read("race,sex,income,approved\nAsian,Male,1,1\n").unwrap();
        assert!(matches!(clean(&raw, 0.25), Err(TabularError::NoRows)));
        assert!(matches!(
            clean(&raw, 1.5),
            Err(TabularError::BadThreshold(_))
        ));
    }

    #[test]
    fn encodes_by_domain_order() {
        let raw = read(
            "race,sex,income,approved\n\
             Black,Female,50,1\n\
             White,Joint,100,0\n\
             Joint,Male,150,1\n",
        )
        .unwrap();
        let ds = encode_and_normalize(&raw).unwrap();
        let sex = ds.column_index("sex").unwrap();
        let income = ds.column_index("income").unwrap();
        assert_eq!(ds.rows()[0][sex], 0.0);
        assert_eq!(ds.rows()[1][sex], 2.0);
        assert_eq!(ds.rows()[2][sex], 1.0);
        let incomes: Vec<f64> = ds.rows().iter().map(|r| r[income]).collect();
        assert_eq!(incomes, vec![0.0, 0.5, 1.0]);
        assert_eq!(ds.label(0), 1);
        assert_eq!(ds.label(1), 0);
    }

    #[test]
    fn constant_numeric_column_maps_to_zero() {
        let raw = read("race,sex,income,approved\nWhite,Male,7,1\nBlack,Male,7,0\n").unwrap();
        let ds = encode_and_normalize(&raw).unwrap();
        let income = ds.column_index("income").unwrap();
        assert!(ds.rows().iter().all(|r| r[income] == 0.0));
        assert_eq!(ds.decode_cell(income, 0.0), "7");
    }

    #[test]
    fn unparseable_numeric_cell_names_column_and_row() {
        let raw = read("race,sex,income,approved\nWhite,Male,7,1\nBlack,Male,lots,0\n").unwrap();
        let err = encode_and_normalize(&raw).unwrap_err();
        assert!(
            matches!(err, TabularError::NotNumeric { ref column, row: 1, .. } if column == "income")
        );
    }

    #[test]
    fn canonical_order_puts_sensitive_first_and_label_last() {
        let schema = vec![
            ColumnSpec::numeric_feature("income"),
            ColumnSpec::binary_label("approved"),
            ColumnSpec::categorical("race", ColumnKind::Sensitive, ["W", "B"]),
            ColumnSpec::categorical("purpose", ColumnKind::Feature, ["home", "refi", "other"]),
            ColumnSpec::categorical("sex", ColumnKind::Sensitive, ["F", "M"]),
        ];
        let raw = read_csv(
            "income,approved,race,purpose,sex\n1,1,W,refi,M\n3,0,B,other,F\n".as_bytes(),
            &schema,
            &markers(),
        )
        .unwrap();
        let ds = encode_and_normalize(&raw).unwrap();
        let names: Vec<&str> = ds.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["race", "sex", "income", "purpose", "approved"]);
        assert_eq!(ds.rows()[0], vec![0.0, 1.0, 0.0, 0.5, 1.0]);
        assert_eq!(ds.rows()[1], vec![1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn categorical_label_uses_domain_order() {
        let schema = vec![
            ColumnSpec::categorical("race", ColumnKind::Sensitive, ["W", "B"]),
            ColumnSpec::categorical("action", ColumnKind::Label, ["3", "1"]),
        ];
        let raw = read_csv(
            "race,action\nW,1\nB,3\nB,2\n".as_bytes(),
            &schema,
            &markers(),
        )
        .unwrap();
        let cleaned = clean(&raw, 0.25).unwrap();
        assert_eq!(cleaned.n_rows(), 2);
        let ds = encode_and_normalize(&cleaned).unwrap();
        assert_eq!((ds.label(0), ds.label(1)), (1, 0));
    }

    #[test]
    fn schema_must_have_exactly_one_label() {
        let mut schema = loan_schema();
        schema.pop();
        assert!(matches!(
            validate_schema(&schema),
            Err(TabularError::Schema(_))
        ));
        let mut schema = loan_schema();
        schema.push(ColumnSpec::binary_label("other"));
        assert!(validate_schema(&schema).is_err());
    }

    #[test]
    fn sensitive_column_needs_two_values() {
        let schema = vec![
            ColumnSpec::categorical("race", ColumnKind::Sensitive, ["White"]),
            ColumnSpec::binary_label("y"),
        ];
        assert!(validate_schema(&schema).is_err());
    }

    #[test]
    fn csv_export_reloads_to_the_same_dataset() {
        let raw = read(
            "race,sex,income,approved\n\
             Black,Female,50,1\n\
             White,Joint,100,0\n\
             Joint,Male,150,1\n",
        )
        .unwrap();
        let ds = encode_and_normalize(&raw).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back =
            encode_and_normalize(&read_csv(&buf[..], &loan_schema(), &markers()).unwrap()).unwrap();
        assert_eq!(back, ds);
    }
}
