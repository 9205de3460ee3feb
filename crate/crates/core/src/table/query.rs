use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{NormalizationPolicy, Table, EMPTY_CELL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    RowPopulation,
    ColumnPopulation,
    CellFilling,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::RowPopulation, Task::ColumnPopulation, Task::CellFilling];

    pub fn name(self) -> &'static str {
        match self {
            Task::RowPopulation => "row_population",
            Task::ColumnPopulation => "column_population",
            Task::CellFilling => "cell_filling",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Task::RowPopulation => "row",
            Task::ColumnPopulation => "col",
            Task::CellFilling => "cell",
        }
    }

    /// Answer normalization used for web-table corpora: accent-folded
    /// lowercase for the population tasks, exact match for cell filling.
    pub fn default_normalization(self) -> NormalizationPolicy {
        match self {
            Task::RowPopulation | Task::ColumnPopulation => NormalizationPolicy::AsciiFoldLowercase,
            Task::CellFilling => NormalizationPolicy::None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" | "row_population" => Ok(Task::RowPopulation),
            "col" | "column" | "column_population" => Ok(Task::ColumnPopulation),
            "cell" | "cell_filling" => Ok(Task::CellFilling),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

/// An ablated (or user-supplied partial) table with its task, and the gold
/// answers when the query was built for training or evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationQuery {
    pub task: Task,
    pub table: Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seed: Option<usize>,
    /// 0-based (row, col) of the cell to fill.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_cell: Option<(usize, usize)>,
    #[serde(default)]
    pub gold: Vec<String>,
    /// Parts of this table are never retrieved for the query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_table_id: Option<String>,
}

impl AugmentationQuery {
    /// Wrap a partial table supplied at serving time. No ablation happens;
    /// for cell filling the target cell is overwritten with the sentinel.
    pub fn for_serving(table: Table, task: Task, target_cell: Option<(usize, usize)>) -> Result<Self> {
        let source = Some(table.id().to_string());
        match task {
            Task::CellFilling => {
                let (row, col) = target_cell.ok_or(Error::MissingTargetCell)?;
                if row >= table.n_rows() || col >= table.n_cols() {
                    return Err(Error::InvalidTargetCell { row, col });
                }
                let mut rows = table.rows().to_vec();
                rows[row][col] = EMPTY_CELL.to_string();
                let ablated = Table::new(table.id(), table.caption(), table.headers().to_vec(), rows, table.key_col())?;
                Ok(AugmentationQuery {
                    task,
                    table: ablated,
                    n_seed: None,
                    target_cell: Some((row, col)),
                    gold: Vec::new(),
                    source_table_id: source,
                })
            }
            _ => Ok(AugmentationQuery {
                task,
                n_seed: Some(match task {
                    Task::RowPopulation => table.n_rows(),
                    _ => table.n_cols(),
                }),
                table,
                target_cell: None,
                gold: Vec::new(),
                source_table_id: source,
            }),
        }
    }

    /// Header of the cell-filling target column.
    pub fn target_header(&self) -> Option<&str> {
        self.target_cell.map(|(_, c)| self.table.headers()[c].as_str())
    }
}

fn dedup_nonempty<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !v.is_empty() && !out.iter().any(|o| o == v) {
            out.push(v.to_string());
        }
    }
    out
}

/// Ablate `table` for `task` and return the query plus gold answers.
///
/// Row population keeps the first `n_seed` rows and the gold set is the
/// key-column values of the rest. Column population keeps the first `n_seed`
/// columns and the gold set is the remaining headers. Cell filling replaces
/// the 0-based `target_cell` with [`EMPTY_CELL`] and the gold set is its
/// original value.
pub fn make_query(
    table: &Table,
    task: Task,
    n_seed: usize,
    target_cell: Option<(usize, usize)>,
) -> Result<AugmentationQuery> {
    let source = Some(table.id().to_string());
    match task {
        Task::RowPopulation => {
            if n_seed == 0 || table.n_rows() <= n_seed {
                return Err(Error::InsufficientTable { task: task.name(), n_seed });
            }
            let k = table.key_col() - 1;
            let gold = dedup_nonempty(table.rows()[n_seed..].iter().map(|r| r[k].as_str()));
            if gold.is_empty() {
                return Err(Error::EmptyGold);
            }
            let q = Table::new(
                table.id(),
                table.caption(),
                table.headers().to_vec(),
                table.rows()[..n_seed].to_vec(),
                table.key_col(),
            )?;
            Ok(AugmentationQuery {
                task,
                table: q,
                n_seed: Some(n_seed),
                target_cell: None,
                gold,
                source_table_id: source,
            })
        }
        Task::ColumnPopulation => {
            if n_seed == 0 || table.n_cols() <= n_seed {
                return Err(Error::InsufficientTable { task: task.name(), n_seed });
            }
            let gold = dedup_nonempty(table.headers()[n_seed..].iter().map(String::as_str));
            if gold.is_empty() {
                return Err(Error::EmptyGold);
            }
            let rows = table.rows().iter().map(|r| r[..n_seed].to_vec()).collect();
            // a key column outside the retained prefix falls back to the first column
            let key_col = if table.key_col() <= n_seed { table.key_col() } else { 1 };
            let q = Table::new(table.id(), table.caption(), table.headers()[..n_seed].to_vec(), rows, key_col)?;
            Ok(AugmentationQuery {
                task,
                table: q,
                n_seed: Some(n_seed),
                target_cell: None,
                gold,
                source_table_id: source,
            })
        }
        Task::CellFilling => {
            let (row, col) = target_cell.ok_or(Error::MissingTargetCell)?;
            let value = table.cell(row, col).ok_or(Error::InvalidTargetCell { row, col })?;
            if value.trim().is_empty() {
                return Err(Error::EmptyTargetCell { row, col });
            }
            let gold = vec![value.to_string()];
            let mut q = AugmentationQuery::for_serving(table.clone(), task, Some((row, col)))?;
            q.gold = gold;
            Ok(q)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::strings;
    use proptest::prelude::*;

    fn grid(r: usize, c: usize) -> Table {
        let headers = (1..=c).map(|j| format!("h{j}")).collect();
        let rows = (1..=r).map(|i| (1..=c).map(|j| format!("v{i}_{j}")).collect()).collect();
        Table::new("g", "grid", headers, rows, 1).unwrap()
    }

    #[test]
    fn row_population_keeps_seed_rows() {
        let q = make_query(&grid(3, 2), Task::RowPopulation, 2, None).unwrap();
        assert_eq!(q.table.n_rows(), 2);
        assert_eq!(q.gold, vec!["v3_1"]);
        assert_eq!(q.source_table_id.as_deref(), Some("g"));
    }

    #[test]
    fn column_population_keeps_seed_columns() {
        let q = make_query(&grid(2, 4), Task::ColumnPopulation, 2, None).unwrap();
        assert_eq!(q.table.headers(), &strings(&["h1", "h2"])[..]);
        assert!(q.table.rows().iter().all(|r| r.len() == 2));
        assert_eq!(q.gold, vec!["h3", "h4"]);
    }

    #[test]
    fn cell_filling_ablates_one_cell() {
        let t = Table::new(
            "pf",
            "Pink Floyd discography",
            strings(&["Album", "Released"]),
            vec![strings(&["The Wall", "1979"]), strings(&["Animals", "1977"])],
            1,
        )
        .unwrap();
        let q = make_query(&t, Task::CellFilling, 0, Some((0, 1))).unwrap();
        assert_eq!(q.gold, vec!["1979"]);
        assert_eq!(q.table.cell(0, 1), Some(EMPTY_CELL));
        assert_eq!(q.table.cell(1, 1), Some("1977"));
        assert_eq!(q.target_header(), Some("Released"));
    }

    #[test]
    fn precondition_errors() {
        let t = grid(2, 2);
        assert!(matches!(make_query(&t, Task::RowPopulation, 2, None), Err(Error::InsufficientTable { .. })));
        assert!(matches!(make_query(&t, Task::ColumnPopulation, 2, None), Err(Error::InsufficientTable { .. })));
        assert!(matches!(make_query(&t, Task::CellFilling, 0, Some((5, 0))), Err(Error::InvalidTargetCell { .. })));
        assert!(matches!(make_query(&t, Task::CellFilling, 0, None), Err(Error::MissingTargetCell)));
        let holes = Table::new("h", "", strings(&["A", "B"]), vec![strings(&["x", ""])], 1).unwrap();
        assert!(matches!(make_query(&holes, Task::CellFilling, 0, Some((0, 1))), Err(Error::EmptyTargetCell { .. })));
    }

    #[test]
    fn task_names_parse() {
        for t in Task::ALL {
            assert_eq!(t.short().parse::<Task>().unwrap(), t);
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!("rows".parse::<Task>().is_err());
    }

    proptest! {
        #[test]
        fn population_ablation_reconstructs(r in 2usize..9, c in 2usize..7, seed_frac in 0.0f64..1.0) {
            let t = grid(r, c);
            let n_rows = 1 + ((r - 1) as f64 * seed_frac) as usize;
            let n_rows = n_rows.min(r - 1);
            let q = make_query(&t, Task::RowPopulation, n_rows, None).unwrap();
            let mut keys: Vec<String> = q.table.key_values().map(str::to_string).collect();
            keys.extend(q.gold.iter().cloned());
            let orig: Vec<String> = t.key_values().map(str::to_string).collect();
            prop_assert_eq!(keys, orig);

            let n_cols = (1 + ((c - 1) as f64 * seed_frac) as usize).min(c - 1);
            let q = make_query(&t, Task::ColumnPopulation, n_cols, None).unwrap();
            let mut headers = q.table.headers().to_vec();
            headers.extend(q.gold.iter().cloned());
            prop_assert_eq!(&headers[..], t.headers());
        }
    }
}
