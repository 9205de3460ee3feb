//! Candidate occurrences inside a retrieved table-part, and span marking.

use serde::{Deserialize, Serialize};

use crate::catalog::PartId;
use crate::corpus::EntityVocab;
use crate::error::{Error, Result};
use crate::table::{Linearization, NormalizationPolicy, TablePart, Task};

pub const MARK_BEGIN: char = '⟨';
pub const MARK_END: char = '⟩';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Header,
    KeyCell,
    Cell,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Header => "header",
            FieldKind::KeyCell => "key_cell",
            FieldKind::Cell => "cell",
        }
    }
}

/// One place in a part where an answer could be read off.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOccurrence {
    pub part_id: PartId,
    /// Byte range in the part's linearization; `text[span] == surface`.
    pub span: (usize, usize),
    pub surface: String,
    pub normalized: String,
    pub field_kind: FieldKind,
    /// Row within the part; `None` for headers.
    pub row: Option<usize>,
    /// 0-based column.
    pub col: usize,
}

/// Column population reads every header, cell filling every non-empty cell,
/// row population every cell (any column) whose value is a known entity.
/// Headers repeat on each row of the linearization; the first row's copy is
/// the one referenced.
pub fn extract_candidates(
    part: &TablePart,
    part_id: PartId,
    lin: &Linearization,
    task: Task,
    vocab: &EntityVocab,
    policy: NormalizationPolicy,
) -> Vec<CandidateOccurrence> {
    let mut out = Vec::new();
    let key = part.key_col - 1;
    match task {
        Task::ColumnPopulation => {
            for (col, h) in part.headers.iter().enumerate() {
                let normalized = policy.normalize(h);
                if normalized.trim().is_empty() {
                    continue;
                }
                let r = &lin.header_spans[0][col];
                out.push(CandidateOccurrence {
                    part_id,
                    span: (r.start, r.end),
                    surface: h.clone(),
                    normalized,
                    field_kind: FieldKind::Header,
                    row: None,
                    col,
                });
            }
        }
        Task::RowPopulation | Task::CellFilling => {
            for (row, cells) in part.rows.iter().enumerate() {
                for (col, v) in cells.iter().enumerate() {
                    let normalized = policy.normalize(v);
                    if normalized.trim().is_empty() {
                        continue;
                    }
                    if task == Task::RowPopulation && !vocab.contains(v) {
                        continue;
                    }
                    let r = &lin.cell_spans[row][col];
                    out.push(CandidateOccurrence {
                        part_id,
                        span: (r.start, r.end),
                        surface: v.clone(),
                        normalized,
                        field_kind: if col == key { FieldKind::KeyCell } else { FieldKind::Cell },
                        row: Some(row),
                        col,
                    });
                }
            }
        }
    }
    out
}

/// Wrap each span in `⟨ ⟩`. Spans must be in bounds, on char boundaries
/// and pairwise disjoint.
pub fn mark_candidates(text: &str, spans: &[(usize, usize)]) -> Result<String> {
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for &(s, e) in &sorted {
        if s > e || e > text.len() || !text.is_char_boundary(s) || !text.is_char_boundary(e) {
            return Err(Error::SpanOutOfBounds { start: s, end: e, len: text.len() });
        }
    }
    for w in sorted.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::OverlappingSpans { at: w[1].0 });
        }
    }
    let mut out = String::with_capacity(text.len() + sorted.len() * 6);
    let mut at = 0;
    for (s, e) in sorted {
        out.push_str(&text[at..s]);
        out.push(MARK_BEGIN);
        out.push_str(&text[s..e]);
        out.push(MARK_END);
        at = e;
    }
    out.push_str(&text[at..]);
    Ok(out)
}

/// Inverse of [`mark_candidates`] for texts without marker characters.
pub fn unmark(text: &str) -> String {
    text.chars().filter(|&c| c != MARK_BEGIN && c != MARK_END).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{chunk_table, strings, Table};

    fn part(rows: Vec<Vec<String>>) -> TablePart {
        let t = Table::new("t", "Pink Floyd", strings(&["Album", "Released"]), rows, 1).unwrap();
        chunk_table(&t, 3).remove(0)
    }

    fn vocab(words: &[&str]) -> EntityVocab {
        let mut v = EntityVocab { policy: NormalizationPolicy::AsciiFoldLowercase, min_count: 3, ..Default::default() };
        for w in words {
            v.counts.insert(w.to_string(), 3);
        }
        v
    }

    #[test]
    fn per_task_candidate_sets() {
        let p = part(vec![strings(&["The Wall", "1979"]), strings(&["Animals", "1977"]), strings(&["Meddle", "1971"])]);
        let lin = Linearization::of_part(&p);
        let none = NormalizationPolicy::None;
        let cols = extract_candidates(&p, 0, &lin, Task::ColumnPopulation, &vocab(&[]), none);
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[1].surface, "Released");
        let cells = extract_candidates(&p, 0, &lin, Task::CellFilling, &vocab(&[]), none);
        assert_eq!(cells.len(), 6);
        assert!(extract_candidates(&p, 0, &lin, Task::RowPopulation, &vocab(&[]), none).is_empty());
        let rows = extract_candidates(&p, 0, &lin, Task::RowPopulation, &vocab(&["animals", "1971"]), none);
        let got: Vec<_> = rows.iter().map(|c| (c.surface.as_str(), c.field_kind)).collect();
        assert_eq!(got, vec![("Animals", FieldKind::KeyCell), ("1971", FieldKind::Cell)]);
        for c in cells.iter().chain(&cols) {
            assert_eq!(&lin.text[c.span.0..c.span.1], c.surface);
        }
    }

    #[test]
    fn marking() {
        let p = part(vec![strings(&["The Wall", "1979"])]);
        let lin = Linearization::of_part(&p);
        let cells = extract_candidates(&p, 0, &lin, Task::CellFilling, &vocab(&[]), NormalizationPolicy::None);
        let year = &cells[1];
        let marked = mark_candidates(&lin.text, &[year.span]).unwrap();
        assert_eq!(marked, "Pink Floyd [SEP] Album : The Wall * Released : ⟨1979⟩ * |");
        assert_eq!(mark_candidates(&lin.text, &[]).unwrap(), lin.text);
        let both: Vec<_> = cells.iter().map(|c| c.span).collect();
        let marked = mark_candidates(&lin.text, &both).unwrap();
        assert_eq!(marked.matches(MARK_BEGIN).count() + marked.matches(MARK_END).count(), 4);
        assert_eq!(unmark(&marked), lin.text);
    }

    #[test]
    fn adjacent_spans_stay_disjoint() {
        let marked = mark_candidates("ab", &[(1, 2), (0, 1)]).unwrap();
        assert_eq!(marked, "⟨a⟩⟨b⟩");
    }

    #[test]
    fn bad_spans() {
        assert!(matches!(mark_candidates("abcd", &[(0, 2), (1, 3)]), Err(Error::OverlappingSpans { at: 1 })));
        assert!(matches!(mark_candidates("ab", &[(1, 5)]), Err(Error::SpanOutOfBounds { .. })));
    }
}
