//! Core table types, chunking into table-parts, and linearization.

mod linearize;
mod normalize;
mod query;

pub use linearize::{linearize_part, linearize_query, linearize_row, Linearization, EMPTY_CELL, SEP};
pub use normalize::NormalizationPolicy;
pub use query::{make_query, AugmentationQuery, Task};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of rows in a table-part.
pub const PART_ROWS: usize = 3;

/// A relational table: caption, headers, a row-major cell matrix and the
/// 1-based index of its key column.
///
/// Construction validates shape, so every `Table` in the program satisfies
/// `rows >= 1`, `cols >= 1`, rectangular rows and `1 <= key_col <= cols`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableRecord", into = "TableRecord")]
pub struct Table {
    id: String,
    caption: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    key_col: usize,
    url: Option<String>,
}

/// The line-delimited wire format for tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRecord {
    pub id: String,
    pub caption: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub key_col: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl TryFrom<TableRecord> for Table {
    type Error = Error;

    fn try_from(r: TableRecord) -> Result<Self> {
        Table::new(r.id, r.caption, r.headers, r.rows, r.key_col).map(|t| t.with_url(r.url))
    }
}

impl From<Table> for TableRecord {
    fn from(t: Table) -> Self {
        TableRecord { id: t.id, caption: t.caption, headers: t.headers, rows: t.rows, key_col: t.key_col, url: t.url }
    }
}

impl Table {
    pub fn new(
        id: impl Into<String>,
        caption: impl Into<String>,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
        key_col: usize,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidTable { id: id.clone(), reason };
        if headers.is_empty() {
            return Err(invalid("table has no columns".into()));
        }
        if rows.is_empty() {
            return Err(invalid("table has no rows".into()));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != headers.len()) {
            return Err(invalid(format!("row {} has {} cells, expected {}", i + 1, row.len(), headers.len())));
        }
        if key_col == 0 || key_col > headers.len() {
            return Err(invalid(format!("key_col {key_col} outside 1..={}", headers.len())));
        }
        Ok(Table { id, caption: caption.into(), headers, rows, key_col, url: None })
    }

    pub fn with_url(mut self, url: Option<String>) -> Self {
        self.url = url;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Parse one line of the table record format.
    pub fn from_json(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serialization is infallible")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn caption(&self) -> &str {
        &self.caption
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// 1-based key column.
    pub fn key_col(&self) -> usize {
        self.key_col
    }

    pub fn url(&self) -> Option<&str> {
        self.url.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.rows.get(row).and_then(|r| r.get(col)).map(String::as_str)
    }

    /// Key-column values in row order.
    pub fn key_values(&self) -> impl Iterator<Item = &str> {
        let k = self.key_col - 1;
        self.rows.iter().map(move |r| r[k].as_str())
    }
}

/// A chunk of up to [`PART_ROWS`] consecutive rows plus the header, pointing
/// back at its source table. The unit of indexing and retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TablePart {
    pub source_table_id: String,
    pub caption: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Inclusive 1-based row range in the source table.
    pub row_range: (usize, usize),
    /// 1-based key column of the source table.
    pub key_col: usize,
}

impl TablePart {
    /// External identifier: `<table id>#<start>-<end>`.
    pub fn part_id(&self) -> String {
        format!("{}#{}-{}", self.source_table_id, self.row_range.0, self.row_range.1)
    }

    /// Recover the source table id from an external part id.
    pub fn table_id_of(part_id: &str) -> &str {
        part_id.rsplit_once('#').map_or(part_id, |(t, _)| t)
    }
}

/// Split a table into parts of at most `max_rows` rows, covering every row
/// exactly once and in order.
pub fn chunk_table(table: &Table, max_rows: usize) -> Vec<TablePart> {
    let max_rows = max_rows.max(1);
    table
        .rows
        .chunks(max_rows)
        .enumerate()
        .map(|(i, chunk)| {
            let start = i * max_rows + 1;
            TablePart {
                source_table_id: table.id.clone(),
                caption: table.caption.clone(),
                headers: table.headers.clone(),
                rows: chunk.to_vec(),
                row_range: (start, start + chunk.len() - 1),
                key_col: table.key_col,
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_with_rows(n: usize) -> Table {
        let rows = (0..n).map(|i| vec![format!("e{i}"), format!("{i}")]).collect();
        Table::new("t", "cap", strings(&["Name", "Year"]), rows, 1).unwrap()
    }

    #[test]
    fn chunking_seven_rows() {
        let ranges: Vec<_> = chunk_table(&table_with_rows(7), PART_ROWS).iter().map(|p| p.row_range).collect();
        assert_eq!(ranges, vec![(1, 3), (4, 6), (7, 7)]);
    }

    #[test]
    fn chunking_boundaries() {
        let one = chunk_table(&table_with_rows(1), PART_ROWS);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].row_range, (1, 1));
        let three = chunk_table(&table_with_rows(3), PART_ROWS);
        assert_eq!(three.len(), 1);
        assert_eq!(three[0].row_range, (1, 3));
        assert_eq!(three[0].part_id(), "t#1-3");
        assert_eq!(TablePart::table_id_of("a#b#4-6"), "a#b");
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let h = strings(&["A", "B"]);
        assert!(Table::new("x", "", h.clone(), vec![], 1).is_err());
        assert!(Table::new("x", "", h.clone(), vec![strings(&["1"])], 1).is_err());
        assert!(Table::new("x", "", h.clone(), vec![strings(&["1", "2"])], 3).is_err());
        assert!(Table::new("x", "", h.clone(), vec![strings(&["1", "2"])], 0).is_err());
        assert!(Table::new("x", "", vec![], vec![vec![]], 1).is_err());
        assert!(Table::new("x", "", h, vec![strings(&["1", "2"])], 2).is_ok());
    }

    #[test]
    fn record_round_trip_is_byte_exact() {
        let line = r#"{"id":"t1","caption":"Pink Floyd discography","headers":["Album","Released"],"rows":[["The Wall","1979"]],"key_col":1,"url":"http://example.com/x"}"#;
        let t = Table::from_json(line).unwrap();
        assert_eq!(t.to_json(), line);
        let no_url = r#"{"id":"t2","caption":"","headers":["A"],"rows":[["1"]],"key_col":1}"#;
        assert_eq!(Table::from_json(no_url).unwrap().to_json(), no_url);
        assert!(Table::from_json(r#"{"id":"t","caption":"","headers":["A"],"rows":[["1","2"]],"key_col":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn chunks_cover_rows_in_order(n in 1usize..60, max_rows in 1usize..6) {
            let t = table_with_rows(n);
            let parts = chunk_table(&t, max_rows);
            let mut next = 1;
            for p in &parts {
                prop_assert!(p.rows.len() <= max_rows && !p.rows.is_empty());
                prop_assert_eq!(p.row_range.0, next);
                prop_assert_eq!(p.row_range.1 - p.row_range.0 + 1, p.rows.len());
                for (i, row) in p.rows.iter().enumerate() {
                    prop_assert_eq!(row, &t.rows()[p.row_range.0 - 1 + i]);
                }
                next = p.row_range.1 + 1;
            }
            prop_assert_eq!(next, n + 1);
        }
    }
}
