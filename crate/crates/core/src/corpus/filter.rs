//! Noisy-table filtering and content deduplication.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::table::Table;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_rows: usize,
    pub min_cols: usize,
    /// A table is dropped when its source host contains any of these.
    pub exclude_domains: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_rows: 4, min_cols: 4, exclude_domains: vec!["wikipedia".to_string()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooSmall,
    Calendar,
    ForumOrTorrent,
    TextBlock,
    WikipediaDomain,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Accept,
    Reject(RejectReason),
}

/// Fraction of day-number cells at or above which a table looks like a calendar.
pub const CALENDAR_DAY_FRACTION: f64 = 0.6;
pub const CALENDAR_MAX_HEADER_TOKENS: usize = 3;
/// Median cell length (in characters) above which a table is a text block.
pub const TEXT_BLOCK_MEDIAN_CHARS: f64 = 100.0;
pub const FORUM_HEADERS: [&str; 6] = ["topic", "replies", "views", "seeders", "leechers", "last post"];

fn host_of(url: &str) -> String {
    match url::Url::parse(url) {
        Ok(u) => u.host_str().unwrap_or_default().to_ascii_lowercase(),
        // bare "host/path" strings
        Err(_) => {
            url.split("://").last().unwrap_or_default().split('/').next().unwrap_or_default().to_ascii_lowercase()
        }
    }
}

fn looks_like_calendar(table: &Table) -> bool {
    let cells: Vec<&String> = table.rows().iter().flatten().collect();
    let days = cells.iter().filter(|c| c.trim().parse::<u32>().is_ok_and(|d| (1..=31).contains(&d))).count();
    let header_tokens: HashSet<String> = table.headers().iter().flat_map(|h| tokenize(h)).collect();
    days as f64 >= CALENDAR_DAY_FRACTION * cells.len() as f64 && header_tokens.len() <= CALENDAR_MAX_HEADER_TOKENS
}

fn looks_like_forum(table: &Table) -> bool {
    table.headers().iter().any(|h| {
        let h = h.trim().to_lowercase();
        FORUM_HEADERS.contains(&h.as_str())
    })
}

fn median_cell_chars(table: &Table) -> f64 {
    let mut lens: Vec<usize> = table.rows().iter().flatten().map(|c| c.chars().count()).collect();
    lens.sort_unstable();
    let n = lens.len();
    if n % 2 == 1 {
        lens[n / 2] as f64
    } else {
        (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0
    }
}

/// Decide whether a crawled table enters the corpus. The first matching
/// rule determines the reason.
pub fn filter_table(table: &Table, source_url: Option<&str>, cfg: &FilterConfig) -> FilterOutcome {
    use FilterOutcome::*;
    if table.n_rows() < cfg.min_rows || table.n_cols() < cfg.min_cols {
        return Reject(RejectReason::TooSmall);
    }
    if let Some(url) = source_url {
        let host = host_of(url);
        if cfg.exclude_domains.iter().any(|d| host.contains(&d.to_ascii_lowercase())) {
            return Reject(RejectReason::WikipediaDomain);
        }
    }
    if looks_like_calendar(table) {
        return Reject(RejectReason::Calendar);
    }
    if looks_like_forum(table) {
        return Reject(RejectReason::ForumOrTorrent);
    }
    if median_cell_chars(table) > TEXT_BLOCK_MEDIAN_CHARS {
        return Reject(RejectReason::TextBlock);
    }
    Accept
}

/// 128-bit content fingerprint over the cell matrix only (row-major, with
/// cell and row separators). Captions and headers do not participate.
pub fn fingerprint(table: &Table) -> u128 {
    let mut h = Sha256::new();
    for row in table.rows() {
        for cell in row {
            h.update(cell.as_bytes());
            h.update([0x1f]);
        }
        h.update([0x1e]);
    }
    let digest = h.finalize();
    u128::from_le_bytes(digest[..16].try_into().unwrap())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub accepted: usize,
    pub too_small: usize,
    pub calendar: usize,
    pub forum_or_torrent: usize,
    pub text_block: usize,
    pub wikipedia_domain: usize,
    pub duplicate: usize,
}

impl FilterReport {
    pub fn record(&mut self, outcome: FilterOutcome) {
        self.input += 1;
        match outcome {
            FilterOutcome::Accept => self.accepted += 1,
            FilterOutcome::Reject(r) => *self.slot(r) += 1,
        }
    }

    fn slot(&mut self, r: RejectReason) -> &mut usize {
        match r {
            RejectReason::TooSmall => &mut self.too_small,
            RejectReason::Calendar => &mut self.calendar,
            RejectReason::ForumOrTorrent => &mut self.forum_or_torrent,
            RejectReason::TextBlock => &mut self.text_block,
            RejectReason::WikipediaDomain => &mut self.wikipedia_domain,
            RejectReason::Duplicate => &mut self.duplicate,
        }
    }

    pub fn rejected(&self) -> usize {
        self.too_small
            + self.calendar
            + self.forum_or_torrent
            + self.text_block
            + self.wikipedia_domain
            + self.duplicate
    }
}

/// Keeps the first table of every content fingerprint.
#[derive(Debug, Default)]
pub struct Deduper {
    seen: HashSet<u128>,
}

impl Deduper {
    pub fn admit(&mut self, table: &Table) -> FilterOutcome {
        if self.seen.insert(fingerprint(table)) {
            FilterOutcome::Accept
        } else {
            FilterOutcome::Reject(RejectReason::Duplicate)
        }
    }
}

/// Deduplicate a stream of tables, keeping first occurrences.
pub fn dedupe(tables: impl IntoIterator<Item = Table>) -> (Vec<Table>, FilterReport) {
    let mut d = Deduper::default();
    let mut report = FilterReport::default();
    let mut kept = Vec::new();
    for t in tables {
        let outcome = d.admit(&t);
        report.record(outcome);
        if outcome == FilterOutcome::Accept {
            kept.push(t);
        }
    }
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::strings;

    fn table(id: &str, caption: &str, headers: &[&str], rows: Vec<Vec<String>>) -> Table {
        Table::new(id, caption, strings(headers), rows, 1).unwrap()
    }

    fn grid(id: &str, r: usize, c: usize) -> Table {
        let headers: Vec<String> = (0..c).map(|j| format!("col{j}")).collect();
        let rows = (0..r).map(|i| (0..c).map(|j| format!("{id}-{i}-{j}")).collect()).collect();
        Table::new(id, "", headers, rows, 1).unwrap()
    }

    #[test]
    fn too_small() {
        let cfg = FilterConfig::default();
        assert_eq!(filter_table(&grid("a", 3, 10), None, &cfg), FilterOutcome::Reject(RejectReason::TooSmall));
        assert_eq!(filter_table(&grid("a", 10, 3), None, &cfg), FilterOutcome::Reject(RejectReason::TooSmall));
        assert_eq!(filter_table(&grid("a", 4, 4), None, &cfg), FilterOutcome::Accept);
    }

    #[test]
    fn wikipedia_hosts() {
        let cfg = FilterConfig::default();
        let t = grid("a", 5, 5);
        for url in
            ["https://en.wikipedia.org/wiki/Pink_Floyd", "http://de.WIKIPEDIA.org/x", "simple.wikipedia.org/page"]
        {
            assert_eq!(filter_table(&t, Some(url), &cfg), FilterOutcome::Reject(RejectReason::WikipediaDomain));
        }
        assert_eq!(filter_table(&t, Some("https://example.com/wikipedia/mirror"), &cfg), FilterOutcome::Accept);
    }

    #[test]
    fn text_block() {
        let long = "x".repeat(300);
        let rows = (0..5).map(|_| vec![long.clone(); 5]).collect();
        let t = table("t", "", &["a", "b", "c", "d", "e"], rows);
        assert_eq!(filter_table(&t, None, &FilterConfig::default()), FilterOutcome::Reject(RejectReason::TextBlock));
        assert!((median_cell_chars(&t) - 300.0).abs() < 1e-12);
    }

    #[test]
    fn calendar_and_forum() {
        let rows = (0..5).map(|w| (0..7).map(|d| format!("{}", (w * 7 + d) % 31 + 1)).collect()).collect();
        let cal = table("c", "", &["", "", "", "", "", "", ""], rows);
        assert_eq!(filter_table(&cal, None, &FilterConfig::default()), FilterOutcome::Reject(RejectReason::Calendar));

        let rows = (0..4).map(|i| strings(&[&format!("post {i}"), "3", "10", "x"])).collect();
        let forum = table("f", "", &["Topic", "Replies", "Views", "Author"], rows);
        assert_eq!(
            filter_table(&forum, None, &FilterConfig::default()),
            FilterOutcome::Reject(RejectReason::ForumOrTorrent)
        );
    }

    #[test]
    fn dedupe_ignores_caption_and_headers() {
        let a = grid("a", 4, 4);
        let b = Table::new("b", "another caption", strings(&["w", "x", "y", "z"]), a.rows().to_vec(), 2).unwrap();
        let mut rows = a.rows().to_vec();
        rows[3][3].push('!');
        let c = Table::new("c", "", a.headers().to_vec(), rows, 1).unwrap();
        let (kept, report) = dedupe(vec![a.clone(), b, a.clone(), c]);
        let ids: Vec<_> = kept.iter().map(|t| t.id().to_string()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(report.duplicate, 2);
        assert_eq!(report.accepted + report.rejected(), report.input);
    }

    #[test]
    fn fingerprint_respects_cell_boundaries() {
        let a = table("a", "", &["x", "y"], vec![strings(&["ab", "c"])]);
        let b = table("b", "", &["x", "y"], vec![strings(&["a", "bc"])]);
        assert_ne!(fingerprint(&a), fingerprint(&b));
    }
}
