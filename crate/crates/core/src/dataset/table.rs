use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared measurement kind of a quasi-identifier column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Ordinal,
    Binary,
    Continuous,
}

impl ColumnKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ordinal" => Ok(ColumnKind::Ordinal),
            "binary" => Ok(ColumnKind::Binary),
            "continuous" => Ok(ColumnKind::Continuous),
            other => Err(Error::Usage(format!("unknown column kind '{other}'"))),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Ordinal => "ordinal",
            ColumnKind::Binary => "binary",
            ColumnKind::Continuous => "continuous",
        };
        f.write_str(s)
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

/// Column roles for loading a CSV file.
///
/// Quasi-identifier order here fixes the dimension order of every
/// conditional chain downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub qi: Vec<Column>,
    pub response: String,
    pub id_column: Option<String>,
}

impl Schema {
    pub fn new(qi: Vec<Column>, response: impl Into<String>) -> Self {
        Self {
            qi,
            response: response.into(),
            id_column: None,
        }
    }

    pub fn with_id_column(mut self, name: impl Into<String>) -> Self {
        self.id_column = Some(name.into());
        self
    }
}

/// Raw CSV cells kept so that an anonymized release can reproduce the
/// original header and pass through columns outside the schema.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SourceRows {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub qi_positions: Vec<usize>,
}

/// Quasi-identifier matrix (row-major), response vector and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    qi: Vec<f64>,
    n: usize,
    d: usize,
    response: Vec<f64>,
    columns: Vec<Column>,
    response_name: String,
    record_ids: Vec<String>,
    pub(crate) source: Option<SourceRows>,
}

impl DataTable {
    /// Builds a table from quasi-identifier rows. Record ids default to row
    /// ordinals (starting at 1) when `record_ids` is `None`.
    pub fn new(
        rows: Vec<Vec<f64>>,
        response: Vec<f64>,
        columns: Vec<Column>,
        response_name: impl Into<String>,
        record_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let d = columns.len();
        let n = rows.len();
        let mut qi = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidTable(format!(
                    "row {i} has {} quasi-identifiers, expected {d}",
                    row.len()
                )));
            }
            qi.extend_from_slice(row);
        }
        Self::from_flat(qi, n, response, columns, response_name.into(), record_ids)
    }

    fn from_flat(
        qi: Vec<f64>,
        n: usize,
        response: Vec<f64>,
        columns: Vec<Column>,
        response_name: String,
        record_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let d = columns.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if d == 0 {
            return Err(Error::InvalidTable("at least one quasi-identifier is required".into()));
        }
        if qi.len() != n * d {
            return Err(Error::Shape {
                expected: n * d,
                got: qi.len(),
            });
        }
        if response.len() != n {
            return Err(Error::InvalidTable(format!(
                "response has {} entries for {n} records",
                response.len()
            )));
        }
        let record_ids = record_ids.unwrap_or_else(|| (1..=n).map(|i| i.to_string()).collect());
        if record_ids.len() != n {
            return Err(Error::InvalidTable(format!(
                "{} record ids for {n} records",
                record_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &record_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidTable(format!("duplicate record id '{id}'")));
            }
        }
        Ok(Self {
            qi,
            n,
            d,
            response,
            columns,
            response_name,
            record_ids,
            source: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.qi[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.qi.chunks_exact(self.d)
    }

    pub fn qi_flat(&self) -> &[f64] {
        &self.qi
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    /// Same records and metadata with a replaced quasi-identifier matrix.
    pub fn with_qi(&self, qi: Vec<f64>) -> Result<Self> {
        if qi.len() != self.n * self.d {
            return Err(Error::Shape {
                expected: self.n * self.d,
                got: qi.len(),
            });
        }
        Ok(Self {
            qi,
            ..self.clone()
        })
    }

    /// Same records and metadata with a replaced response vector.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        if response.len() != self.n {
            return Err(Error::Shape {
                expected: self.n,
                got: response.len(),
            });
        }
        Ok(Self {
            response,
            ..self.clone()
        })
    }

    /// Subset of records in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut qi = Vec::with_capacity(indices.len() * self.d);
        let mut response = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n {
                return Err(Error::Domain(format!("record index {i} out of range")));
            }
            qi.extend_from_slice(self.row(i));
            response.push(self.response[i]);
            ids.push(self.record_ids[i].clone());
        }
        Self::from_flat(
            qi,
            indices.len(),
            response,
            self.columns.clone(),
            self.response_name.clone(),
            Some(ids),
        )
    }
}

/// Rounds to 12 significant decimal digits; continuous inputs are grouped
/// into distinct values after this rounding.
pub fn canonical_value(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Loads a CSV file (header row first) according to `schema`.
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<DataTable> {
    let file = std::fs::File::open(path)?;
    load_table_from_reader(file, schema)
}

pub fn load_table_from_reader<R: Read>(reader: R, schema: &Schema) -> Result<DataTable> {
    if schema.qi.is_empty() {
        return Err(Error::Schema("no quasi-identifier columns declared".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };

    let qi_positions = schema
        .qi
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>>>()?;
    let response_pos = find(&schema.response)?;
    let id_pos = schema.id_column.as_deref().map(find).transpose()?;

    let mut qi = Vec::new();
    let mut response = Vec::new();
    let mut ids = Vec::new();
    let mut raw_rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let cell = |pos: usize, name: &str| -> Result<f64> {
            let text = record.get(pos).unwrap_or("").trim();
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("'{text}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("'{text}' is not finite"),
                });
            }
            Ok(value)
        };
        for (col, &pos) in schema.qi.iter().zip(&qi_positions) {
            let v = cell(pos, &col.name)?;
            qi.push(match col.kind {
                ColumnKind::Continuous => canonical_value(v),
                _ => v,
            });
        }
        response.push(cell(response_pos, &schema.response)?);
        if let Some(pos) = id_pos {
            ids.push(record.get(pos).unwrap_or("").trim().to_string());
        }
        raw_rows.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if response.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = response.len();
    let mut table = DataTable::from_flat(
        qi,
        n,
        response,
        schema.qi.clone(),
        schema.response.clone(),
        id_pos.map(|_| ids),
    )?;
    table.source = Some(SourceRows {
        headers,
        rows: raw_rows,
        qi_positions,
    });
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(
            vec![
                Column::new("age", ColumnKind::Ordinal),
                Column::new("sex", ColumnKind::Binary),
            ],
            "cost",
        )
    }

    #[test]
    fn loads_rows_in_file_order() {
        let csv = "age,sex,cost\n3,0,100.5\n5,1,20\n";
        let t = load_table_from_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!((t.n(), t.d()), (2, 2));
        assert_eq!(t.row(0), &[3.0, 0.0]);
        assert_eq!(t.row(1), &[5.0, 1.0]);
        assert_eq!(t.response(), &[100.5, 20.0]);
        assert_eq!(t.record_ids(), &["1".to_string(), "2".to_string()]);
    }

    #[test]
    fn missing_response_column_is_a_schema_error() {
        let csv = "age,sex,price\n3,0,1\n";
        let err = load_table_from_reader(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("cost")), "{err}");
    }

    #[test]
    fn non_numeric_cell_cites_row_and_column() {
        let csv = "age,sex,cost\n3,0,1\nabc,1,2\n";
        match load_table_from_reader(csv.as_bytes(), &schema()).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn header_only_is_empty_input() {
        let csv = "age,sex,cost\n";
        assert!(matches!(
            load_table_from_reader(csv.as_bytes(), &schema()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn declared_id_column_is_used() {
        let csv = "pid,age,sex,cost\nA7,3,0,1\nB2,4,1,2\n";
        let t = load_table_from_reader(csv.as_bytes(), &schema().with_id_column("pid")).unwrap();
        assert_eq!(t.record_ids(), &["A7".to_string(), "B2".to_string()]);
        let dup = "pid,age,sex,cost\nA7,3,0,1\nA7,4,1,2\n";
        assert!(load_table_from_reader(dup.as_bytes(), &schema().with_id_column("pid")).is_err());
    }

    #[test]
    fn continuous_columns_are_rounded_to_twelve_digits() {
        let s = Schema::new(vec![Column::new("bmi", ColumnKind::Continuous)], "cost");
        let csv = "bmi,cost\n0.1000000000000004,1\n0.1,2\n";
        let t = load_table_from_reader(csv.as_bytes(), &s).unwrap();
        assert_eq!(t.row(0)[0], t.row(1)[0]);
        assert_eq!(canonical_value(123456.7890123456), 123456.789012);
    }

    #[test]
    fn table_invariants_are_enforced() {
        let cols = vec![Column::new("a", ColumnKind::Ordinal)];
        assert!(DataTable::new(vec![], vec![], cols.clone(), "y", None).is_err());
        assert!(DataTable::new(vec![vec![1.0]], vec![1.0, 2.0], cols.clone(), "y", None).is_err());
        assert!(DataTable::new(vec![vec![1.0, 2.0]], vec![1.0], cols, "y", None).is_err());
    }
}
