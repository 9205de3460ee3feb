use std::ops::Range;

use super::{AugmentationQuery, Table, TablePart, Task};

pub const SEP: &str = "[SEP]";
/// Stands in for the ablated cell of a cell-filling query.
pub const EMPTY_CELL: &str = "[EMPTY]";

/// A linearized table-part together with the byte span of every header and
/// cell occurrence in the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linearization {
    pub text: String,
    /// `header_spans[row][col]`: headers are repeated once per row.
    pub header_spans: Vec<Vec<Range<usize>>>,
    /// `cell_spans[row][col]`.
    pub cell_spans: Vec<Vec<Range<usize>>>,
}

#[derive(Default)]
struct Joiner {
    text: String,
    started: bool,
}

impl Joiner {
    fn push(&mut self, piece: &str) -> Range<usize> {
        if self.started {
            self.text.push(' ');
        }
        self.started = true;
        let start = self.text.len();
        self.text.push_str(piece);
        start..self.text.len()
    }
}

fn push_row(j: &mut Joiner, headers: &[String], row: &[String]) -> (Vec<Range<usize>>, Vec<Range<usize>>) {
    let mut hs = Vec::with_capacity(headers.len());
    let mut cs = Vec::with_capacity(headers.len());
    for (h, v) in headers.iter().zip(row) {
        hs.push(j.push(h));
        j.push(":");
        cs.push(j.push(v));
        j.push("*");
    }
    (hs, cs)
}

/// `h1 : v1 * h2 : v2 *`
pub fn linearize_row(headers: &[String], row: &[String]) -> String {
    debug_assert_eq!(headers.len(), row.len());
    let mut j = Joiner::default();
    push_row(&mut j, headers, row);
    j.text
}

fn linearize_rows(caption: &str, headers: &[String], rows: &[Vec<String>]) -> Linearization {
    let mut j = Joiner::default();
    if !caption.is_empty() {
        j.push(caption);
    }
    j.push(SEP);
    let mut header_spans = Vec::with_capacity(rows.len());
    let mut cell_spans = Vec::with_capacity(rows.len());
    for row in rows {
        let (hs, cs) = push_row(&mut j, headers, row);
        header_spans.push(hs);
        cell_spans.push(cs);
        j.push("|");
    }
    Linearization { text: j.text, header_spans, cell_spans }
}

impl Linearization {
    pub fn of_part(part: &TablePart) -> Self {
        linearize_rows(&part.caption, &part.headers, &part.rows)
    }

    pub fn of_table(table: &Table) -> Self {
        linearize_rows(table.caption(), table.headers(), table.rows())
    }
}

/// `<caption> [SEP] <row> | <row> | ...`
pub fn linearize_part(part: &TablePart) -> String {
    Linearization::of_part(part).text
}

/// The ablated table in part format. Cell-filling queries additionally name
/// the target column: `... | [SEP] target : <header>`.
pub fn linearize_query(query: &AugmentationQuery) -> String {
    let mut text = Linearization::of_table(&query.table).text;
    if query.task == Task::CellFilling {
        if let Some((_, col)) = query.target_cell {
            text.push_str(" [SEP] target : ");
            text.push_str(&query.table.headers()[col]);
        }
    }
    text
}
