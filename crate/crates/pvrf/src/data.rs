//! Survival datasets: typed covariate columns, CSV ingestion with a JSON
//! column-kind schema, and counting-process episode splitting for the
//! stratified Cox model.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of a covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Continuous,
    Binary,
    Categorical,
}

/// Values of one covariate column, stored according to its kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateData {
    /// Arbitrary finite reals.
    Continuous(Vec<f64>),
    /// 0/1 indicators.
    Binary(Vec<u8>),
    /// Codes into an interned level list; level order is first appearance
    /// in the data unless the schema declared the levels explicitly.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

/// A named covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateColumn {
    pub name: String,
    pub data: CovariateData,
}

impl CovariateColumn {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        CovariateColumn {
            name: name.into(),
            data: CovariateData::Continuous(values),
        }
    }

    pub fn binary(name: impl Into<String>, values: Vec<u8>) -> Self {
        CovariateColumn {
            name: name.into(),
            data: CovariateData::Binary(values),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>, codes: Vec<u32>) -> Self {
        CovariateColumn {
            name: name.into(),
            data: CovariateData::Categorical { levels, codes },
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            CovariateData::Continuous(v) => v.len(),
            CovariateData::Binary(v) => v.len(),
            CovariateData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> CovariateKind {
        match &self.data {
            CovariateData::Continuous(_) => CovariateKind::Continuous,
            CovariateData::Binary(_) => CovariateKind::Binary,
            CovariateData::Categorical { .. } => CovariateKind::Categorical,
        }
    }

    /// Numeric encoding of row `i`.  Continuous values are returned as-is,
    /// binary as 0.0/1.0.  Categorical columns have no scalar encoding and
    /// must be accessed through [`CovariateColumn::code`].
    pub fn numeric(&self, i: usize) -> f64 {
        match &self.data {
            CovariateData::Continuous(v) => v[i],
            CovariateData::Binary(v) => f64::from(v[i]),
            CovariateData::Categorical { .. } => {
                panic!("column {:?} is categorical; use code()", self.name)
            }
        }
    }

    /// Level code of row `i` of a categorical column.
    pub fn code(&self, i: usize) -> u32 {
        match &self.data {
            CovariateData::Categorical { codes, .. } => codes[i],
            _ => panic!("column {:?} is not categorical", self.name),
        }
    }

    /// Declared levels of a categorical column, if any.
    pub fn levels(&self) -> Option<&[String]> {
        match &self.data {
            CovariateData::Categorical { levels, .. } => Some(levels),
            _ => None,
        }
    }

    /// Number of distinct admissible values: 2 for binary, the level count
    /// for categorical, `None` for continuous.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.data {
            CovariateData::Continuous(_) => None,
            CovariateData::Binary(_) => Some(2),
            CovariateData::Categorical { levels, .. } => Some(levels.len()),
        }
    }

    /// String form of row `i`, as it would appear in a CSV file.
    pub fn display(&self, i: usize) -> String {
        match &self.data {
            CovariateData::Continuous(v) => format!("{}", v[i]),
            CovariateData::Binary(v) => format!("{}", v[i]),
            CovariateData::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
        }
    }

    /// Subset of this column at the given row indices (repeats allowed).
    pub fn select(&self, rows: &[usize]) -> CovariateColumn {
        let data = match &self.data {
            CovariateData::Continuous(v) => {
                CovariateData::Continuous(rows.iter().map(|&r| v[r]).collect())
            }
            CovariateData::Binary(v) => CovariateData::Binary(rows.iter().map(|&r| v[r]).collect()),
            CovariateData::Categorical { levels, codes } => CovariateData::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        };
        CovariateColumn {
            name: self.name.clone(),
            data,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.data {
            CovariateData::Continuous(v) => {
                for (i, x) in v.iter().enumerate() {
                    if !x.is_finite() {
                        return Err(Error::BadValue {
                            row: i,
                            column: self.name.clone(),
                            value: format!("{x}"),
                            expected: "finite number",
                        });
                    }
                }
            }
            CovariateData::Binary(v) => {
                for (i, x) in v.iter().enumerate() {
                    if *x > 1 {
                        return Err(Error::BadValue {
                            row: i,
                            column: self.name.clone(),
                            value: format!("{x}"),
                            expected: "0 or 1",
                        });
                    }
                }
            }
            CovariateData::Categorical { levels, codes } => {
                if levels.is_empty() {
                    return Err(Error::InvalidRequest(format!(
                        "categorical column {:?} has no levels",
                        self.name
                    )));
                }
                for (i, c) in codes.iter().enumerate() {
                    if *c as usize >= levels.len() {
                        return Err(Error::UnknownLevel {
                            row: i,
                            column: self.name.clone(),
                            value: format!("<code {c}>"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// An immutable, column-oriented covariate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateFrame {
    n_rows: usize,
    columns: Vec<CovariateColumn>,
}

impl CovariateFrame {
    /// Build a frame from columns, checking equal lengths and unique names.
    pub fn new(columns: Vec<CovariateColumn>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, CovariateColumn::len);
        let mut seen = HashSet::new();
        for col in &columns {
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch {
                    context: "covariate column length",
                    expected: n_rows,
                    got: col.len(),
                });
            }
            if !seen.insert(col.name.clone()) {
                return Err(Error::InvalidRequest(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
            col.validate()?;
        }
        Ok(CovariateFrame { n_rows, columns })
    }

    /// Frame with no columns but a definite row count (intercept-only models).
    pub fn empty(n_rows: usize) -> Self {
        CovariateFrame {
            n_rows,
            columns: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[CovariateColumn] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &CovariateColumn {
        &self.columns[index]
    }

    /// Position of a column by name.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
            })
    }

    pub fn by_name(&self, name: &str) -> Result<&CovariateColumn> {
        Ok(&self.columns[self.index_of(name)?])
    }

    /// Row subset (indices may repeat, e.g. for counterfactual duplication).
    pub fn select_rows(&self, rows: &[usize]) -> CovariateFrame {
        CovariateFrame {
            n_rows: rows.len(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
        }
    }

    /// Copy of the frame with column `index` set to the constant `level` in
    /// every row.  `level` is interpreted under the column's kind: a level
    /// name for categorical columns, `"0"`/`"1"` for binary, a number for
    /// continuous.
    pub fn with_forced_value(&self, index: usize, level: &str) -> Result<CovariateFrame> {
        let mut columns = self.columns.clone();
        let col = &mut columns[index];
        let n = self.n_rows;
        col.data = match &col.data {
            CovariateData::Continuous(_) => {
                let x: f64 = level.parse().map_err(|_| Error::BadValue {
                    row: 0,
                    column: col.name.clone(),
                    value: level.to_string(),
                    expected: "finite number",
                })?;
                CovariateData::Continuous(vec![x; n])
            }
            CovariateData::Binary(_) => {
                let b = match level {
                    "0" => 0u8,
                    "1" => 1u8,
                    _ => {
                        return Err(Error::BadValue {
                            row: 0,
                            column: col.name.clone(),
                            value: level.to_string(),
                            expected: "0 or 1",
                        })
                    }
                };
                CovariateData::Binary(vec![b; n])
            }
            CovariateData::Categorical { levels, .. } => {
                let code = levels
                    .iter()
                    .position(|l| l == level)
                    .ok_or_else(|| Error::UnknownLevel {
                        row: 0,
                        column: col.name.clone(),
                        value: level.to_string(),
                    })? as u32;
                CovariateData::Categorical {
                    levels: levels.clone(),
                    codes: vec![code; n],
                }
            }
        };
        Ok(CovariateFrame {
            n_rows: n,
            columns,
        })
    }

    /// Admissible values of a column for contrast/grouping purposes.
    pub fn level_names(&self, index: usize) -> Result<Vec<String>> {
        let col = &self.columns[index];
        match &col.data {
            CovariateData::Binary(_) => Ok(vec!["0".into(), "1".into()]),
            CovariateData::Categorical { levels, .. } => Ok(levels.clone()),
            CovariateData::Continuous(_) => Err(Error::InvalidRequest(format!(
                "column {:?} is continuous and has no levels",
                col.name
            ))),
        }
    }
}

/// A complete right-censored survival dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    /// Observed follow-up time per individual (event or censoring time).
    pub time: Vec<f64>,
    /// 1 = event observed, 0 = censored.
    pub status: Vec<u8>,
    /// Covariate matrix; rows align with `time`/`status`.
    pub covariates: CovariateFrame,
    /// Index into `covariates` of the treatment column, when one is declared.
    pub treatment: Option<usize>,
    /// Row identifiers; generated as 1-based indices when absent from the file.
    pub ids: Vec<String>,
    /// Column names used when writing back to CSV.
    pub time_name: String,
    pub status_name: String,
    /// Name of the id column in the source file, if it had one.
    pub id_name: Option<String>,
}

impl SurvivalDataset {
    /// Assemble and validate a dataset with default column names.
    pub fn new(time: Vec<f64>, status: Vec<u8>, covariates: CovariateFrame) -> Result<Self> {
        let ids = (1..=time.len()).map(|i| i.to_string()).collect();
        let ds = SurvivalDataset {
            time,
            status,
            covariates,
            treatment: None,
            ids,
            time_name: "time".into(),
            status_name: "status".into(),
            id_name: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Same as [`SurvivalDataset::new`] but recording the treatment column.
    pub fn with_treatment(
        time: Vec<f64>,
        status: Vec<u8>,
        covariates: CovariateFrame,
        treatment: &str,
    ) -> Result<Self> {
        let mut ds = SurvivalDataset::new(time, status, covariates)?;
        ds.treatment = Some(ds.covariates.index_of(treatment)?);
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    fn validate(&self) -> Result<()> {
        if self.time.len() < 2 {
            return Err(Error::EmptyData(String::from(
                " (need at least 2 individuals for leave-one-out)",
            )));
        }
        if self.status.len() != self.time.len() {
            return Err(Error::DimensionMismatch {
                context: "status length",
                expected: self.time.len(),
                got: self.status.len(),
            });
        }
        if self.covariates.n_cols() > 0 && self.covariates.n_rows() != self.time.len() {
            return Err(Error::DimensionMismatch {
                context: "covariate rows",
                expected: self.time.len(),
                got: self.covariates.n_rows(),
            });
        }
        if self.ids.len() != self.time.len() {
            return Err(Error::DimensionMismatch {
                context: "id length",
                expected: self.time.len(),
                got: self.ids.len(),
            });
        }
        for (i, &t) in self.time.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::BadOutcome {
                    row: i,
                    reason: format!("non-positive observed time {t}"),
                });
            }
        }
        for (i, &d) in self.status.iter().enumerate() {
            if d > 1 {
                return Err(Error::BadOutcome {
                    row: i,
                    reason: format!("status {d} not in {{0,1}}"),
                });
            }
        }
        Ok(())
    }

    /// Row subset as a new dataset (used for cross-validation folds).
    pub fn select_rows(&self, rows: &[usize]) -> Result<SurvivalDataset> {
        let ds = SurvivalDataset {
            time: rows.iter().map(|&r| self.time[r]).collect(),
            status: rows.iter().map(|&r| self.status[r]).collect(),
            covariates: self.covariates.select_rows(rows),
            treatment: self.treatment,
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            time_name: self.time_name.clone(),
            status_name: self.status_name.clone(),
            id_name: self.id_name.clone(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Name of the treatment column, if declared.
    pub fn treatment_name(&self) -> Option<&str> {
        self.treatment
            .map(|i| self.covariates.column(i).name.as_str())
    }
}

/// Declared kind of one schema column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnDecl {
    /// `"continuous"`, `"binary"`, or `"categorical"` (levels inferred,
    /// ordered by first appearance).
    Kind(String),
    /// `{"categorical": ["A", "B", ...]}` with an explicit level order.
    Categorical { categorical: Vec<String> },
}

/// JSON schema declaring which CSV columns to read and how to type them.
///
/// ```json
/// {
///   "time": "time",
///   "status": "status",
///   "treatment": "trt",
///   "columns": {"age": "continuous", "sex": "binary", "trt": "categorical"}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub time: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub columns: IndexMap<String, ColumnDecl>,
}

impl Schema {
    pub fn from_json(json: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(json)?;
        schema.check()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Schema> {
        Schema::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        for (name, decl) in &self.columns {
            if let ColumnDecl::Kind(k) = decl {
                match k.as_str() {
                    "continuous" | "binary" | "categorical" => {}
                    other => {
                        return Err(Error::InvalidRequest(format!(
                            "column {name:?}: unknown kind {other:?} (expected continuous, binary, or categorical)"
                        )))
                    }
                }
            }
        }
        if let Some(trt) = &self.treatment {
            if !self.columns.contains_key(trt) {
                return Err(Error::InvalidRequest(format!(
                    "treatment column {trt:?} is not declared in columns"
                )));
            }
        }
        Ok(())
    }
}

/// Whether a raw CSV field counts as missing.
fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "NA"
}

enum Builder {
    Continuous(Vec<f64>),
    Binary(Vec<u8>),
    Categorical {
        declared: bool,
        levels: Vec<String>,
        codes: Vec<u32>,
    },
}

/// Read a CSV file under `schema`.
///
/// Rows with missing values are rejected with a row-indexed error unless
/// `drop_incomplete` is set, in which case they are silently skipped.
/// Column order in the resulting dataset follows the CSV header.
pub fn load_csv(path: &Path, schema: &Schema, drop_incomplete: bool) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
            })
    };

    let time_idx = find(&schema.time)?;
    let status_idx = find(&schema.status)?;
    let id_idx = match &schema.id {
        Some(name) => Some(find(name)?),
        None => None,
    };

    // Covariates in header order, restricted to declared columns.
    let mut cov_fields: Vec<(usize, String)> = Vec::new();
    for (pos, h) in headers.iter().enumerate() {
        if schema.columns.contains_key(h) {
            cov_fields.push((pos, h.clone()));
        }
    }
    for name in schema.columns.keys() {
        find(name)?; // every declared column must exist
    }

    let mut builders: Vec<Builder> = cov_fields
        .iter()
        .map(|(_, name)| match &schema.columns[name] {
            ColumnDecl::Kind(k) => match k.as_str() {
                "continuous" => Builder::Continuous(Vec::new()),
                "binary" => Builder::Binary(Vec::new()),
                _ => Builder::Categorical {
                    declared: false,
                    levels: Vec::new(),
                    codes: Vec::new(),
                },
            },
            ColumnDecl::Categorical { categorical } => Builder::Categorical {
                declared: true,
                levels: categorical.clone(),
                codes: Vec::new(),
            },
        })
        .collect();

    let mut time = Vec::new();
    let mut status = Vec::new();
    let mut ids = Vec::new();

    'rows: for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let get = |pos: usize| record.get(pos).unwrap_or("").trim();

        // First pass over the row: reject (or skip) on any missing field.
        let mut probe: Vec<(&str, &str)> = vec![(get(time_idx), schema.time.as_str())];
        probe.push((get(status_idx), schema.status.as_str()));
        for (pos, name) in &cov_fields {
            probe.push((get(*pos), name.as_str()));
        }
        for (field, col) in &probe {
            if is_missing(field) {
                if drop_incomplete {
                    continue 'rows;
                }
                return Err(Error::MissingValue {
                    row: row_idx,
                    column: (*col).to_string(),
                });
            }
        }

        let t_field = get(time_idx);
        let t: f64 = t_field.parse().map_err(|_| Error::BadValue {
            row: row_idx,
            column: schema.time.clone(),
            value: t_field.to_string(),
            expected: "number",
        })?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::BadOutcome {
                row: row_idx,
                reason: format!("non-positive observed time {t}"),
            });
        }
        let d_field = get(status_idx);
        let d: u8 = match d_field {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::BadOutcome {
                    row: row_idx,
                    reason: format!("status {other:?} not in {{0,1}}"),
                })
            }
        };

        for ((pos, name), builder) in cov_fields.iter().zip(builders.iter_mut()) {
            let field = get(*pos);
            match builder {
                Builder::Continuous(values) => {
                    let x: f64 = field.parse().map_err(|_| Error::BadValue {
                        row: row_idx,
                        column: name.clone(),
                        value: field.to_string(),
                        expected: "number",
                    })?;
                    if !x.is_finite() {
                        return Err(Error::BadValue {
                            row: row_idx,
                            column: name.clone(),
                            value: field.to_string(),
                            expected: "finite number",
                        });
                    }
                    values.push(x);
                }
                Builder::Binary(values) => match field {
                    "0" => values.push(0),
                    "1" => values.push(1),
                    other => {
                        return Err(Error::BadValue {
                            row: row_idx,
                            column: name.clone(),
                            value: other.to_string(),
                            expected: "0 or 1",
                        })
                    }
                },
                Builder::Categorical {
                    declared,
                    levels,
                    codes,
                } =>

                match levels.iter().position(|l| l == field) {
                    Some(code) => codes.push(code as u32),
                    None if *declared => {
                        return Err(Error::UnknownLevel {
                            row: row_idx,
                            column: name.clone(),
                            value: field.to_string(),
                        })
                    }
                    None => {
                        levels.push(field.to_string());
                        codes.push((levels.len() - 1) as u32);
                    }
                },
            }
        }

        time.push(t);
        status.push(d);
        ids.push(match id_idx {
            Some(pos) => get(pos).to_string(),
            None => (time.len()).to_string(),
        });
    }

    let columns: Vec<CovariateColumn> = cov_fields
        .iter()
        .zip(builders)
        .map(|((_, name), b)| {
            let data = match b {
                Builder::Continuous(v) => CovariateData::Continuous(v),
                Builder::Binary(v) => CovariateData::Binary(v),
                Builder::Categorical { levels, codes, .. } => {
                    CovariateData::Categorical { levels, codes }
                }
            };
            CovariateColumn {
                name: name.clone(),
                data,
            }
        })
        .collect();

    let covariates = CovariateFrame::new(columns)?;
    let treatment = match &schema.treatment {
        Some(name) => Some(covariates.index_of(name)?),
        None => None,
    };

    let ds = SurvivalDataset {
        time,
        status,
        covariates,
        treatment,
        ids,
        time_name: schema.time.clone(),
        status_name: schema.status.clone(),
        id_name: schema.id.clone(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset back to CSV.  Column order: id (when the source had an id
/// column), time, status, covariates in frame order.
pub fn write_csv(dataset: &SurvivalDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = Vec::new();
    if let Some(id_name) = &dataset.id_name {
        header.push(id_name.clone());
    }
    header.push(dataset.time_name.clone());
    header.push(dataset.status_name.clone());
    for col in dataset.covariates.columns() {
        header.push(col.name.clone());
    }
    writer.write_record(&header)?;

    for i in 0..dataset.n() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if dataset.id_name.is_some() {
            record.push(dataset.ids[i].clone());
        }
        record.push(format!("{}", dataset.time[i]));
        record.push(format!("{}", dataset.status[i]));
        for col in dataset.covariates.columns() {
            record.push(col.display(i));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// The schema that describes `dataset` as [`write_csv`] lays it out.
pub fn schema_of(dataset: &SurvivalDataset) -> Schema {
    let mut columns = IndexMap::new();
    for col in dataset.covariates.columns() {
        let decl = match &col.data {
            CovariateData::Continuous(_) => ColumnDecl::Kind("continuous".into()),
            CovariateData::Binary(_) => ColumnDecl::Kind("binary".into()),
            CovariateData::Categorical { levels, .. } => ColumnDecl::Categorical {
                categorical: levels.clone(),
            },
        };
        columns.insert(col.name.clone(), decl);
    }
    Schema {
        time: dataset.time_name.clone(),
        status: dataset.status_name.clone(),
        treatment: dataset.treatment_name().map(str::to_string),
        id: dataset.id_name.clone(),
        columns,
    }
}

/// One counting-process row: the individual `subject` is at risk on
/// `(start, stop]` within `stratum`, with `status` recorded at `stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub subject: usize,
    pub start: f64,
    pub stop: f64,
    pub status: u8,
    pub stratum: String,
}

/// Episode (start, stop] representation of a dataset, as consumed by the
/// stratified Cox fit.  Covariates stay attached to subjects, not episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDataset {
    pub rows: Vec<EpisodeRow>,
    pub covariates: CovariateFrame,
}

/// Stratum label for a (value, side-of-cut) pair.
pub fn stratum_label(value: &str, after_cut: bool) -> String {
    let mut s = String::with_capacity(value.len() + 5);
    s.push_str(value);
    s.push('|');
    s.push_str(if after_cut { "post" } else { "pre" });
    s
}

/// Split each individual's follow-up at `cut`, stratifying on
/// `strat_column` crossed with before/after the cut.
///
/// An individual observed beyond the cut contributes two rows: `(0, cut]`
/// with status 0 and `(cut, T̃]` with the original status.  Individuals with
/// `T̃ ≤ cut` contribute a single row in the "pre" stratum.
pub fn split_episodes(
    dataset: &SurvivalDataset,
    cut: f64,
    strat_column: &str,
) -> Result<EpisodeDataset> {
    if !(cut.is_finite() && cut > 0.0) {
        return Err(Error::InvalidRequest(format!(
            "episode cut point must be positive, got {cut}"
        )));
    }
    let col_idx = dataset.covariates.index_of(strat_column)?;
    let col = dataset.covariates.column(col_idx);
    if col.kind() == CovariateKind::Continuous {
        return Err(Error::InvalidRequest(format!(
            "cannot stratify on continuous column {strat_column:?}"
        )));
    }

    let mut rows = Vec::with_capacity(dataset.n());
    for i in 0..dataset.n() {
        let value = col.display(i);
        let t = dataset.time[i];
        if t > cut {
            rows.push(EpisodeRow {
                subject: i,
                start: 0.0,
                stop: cut,
                status: 0,
                stratum: stratum_label(&value, false),
            });
            rows.push(EpisodeRow {
                subject: i,
                start: cut,
                stop: t,
                status: dataset.status[i],
                stratum: stratum_label(&value, true),
            });
        } else {
            rows.push(EpisodeRow {
                subject: i,
                start: 0.0,
                stop: t,
                status: dataset.status[i],
                stratum: stratum_label(&value, false),
            });
        }
    }
    Ok(EpisodeDataset {
        rows,
        covariates: dataset.covariates.clone(),
    })
}

/// View of a plain dataset as single-episode rows in one stratum, so the
/// unstratified Cox model can share the counting-process fitting path.
pub fn whole_follow_up(dataset: &SurvivalDataset) -> EpisodeDataset {
    let rows = (0..dataset.n())
        .map(|i| EpisodeRow {
            subject: i,
            start: 0.0,
            stop: dataset.time[i],
            status: dataset.status[i],
            stratum: String::new(),
        })
        .collect();
    EpisodeDataset {
        rows,
        covariates: dataset.covariates.clone(),
    }
}
