//! Response bodies. Every float on the wire carries 6 significant digits.

use serde::{Serialize, Serializer};
use tabaug_core::catalog::{PartCatalog, PartId};
use tabaug_core::reader::RankedAnswer;

/// `x` rounded to 6 significant digits. Non-finite values pass through.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("scientific notation parses")
}

pub fn six<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round6(*x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceRef {
    /// `<table id>#<first row>-<last row>`, 1-based inclusive.
    pub part_id: String,
    pub table_id: String,
    /// Byte span of the occurrence in the part's linearization.
    pub span: [usize; 2],
    #[serde(serialize_with = "six")]
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerOut {
    pub answer: String,
    pub normalized: String,
    #[serde(serialize_with = "six")]
    pub score: f64,
    pub provenance: Vec<ProvenanceRef>,
}

impl AnswerOut {
    pub fn new(a: &RankedAnswer, catalog: &PartCatalog) -> Self {
        AnswerOut {
            answer: a.surface.clone(),
            normalized: a.normalized.clone(),
            score: a.score,
            provenance: a
                .provenance
                .iter()
                .map(|p| {
                    let part = catalog.part(p.part);
                    ProvenanceRef {
                        part_id: part.part_id(),
                        table_id: part.source_table_id.clone(),
                        span: [p.span.0, p.span.1],
                        contribution: p.contribution,
                    }
                })
                .collect(),
        }
    }
}

/// A retrieved part with its rank, score and full content.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartOut {
    pub rank: usize,
    pub part_id: String,
    pub table_id: String,
    #[serde(serialize_with = "six")]
    pub score: f64,
    pub row_range: [usize; 2],
    pub caption: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub linearization: String,
}

impl PartOut {
    pub fn new(rank: usize, id: PartId, score: f64, catalog: &PartCatalog) -> Self {
        let part = catalog.part(id);
        PartOut {
            rank,
            part_id: part.part_id(),
            table_id: part.source_table_id.clone(),
            score,
            row_range: [part.row_range.0, part.row_range.1],
            caption: part.caption.clone(),
            headers: part.headers.clone(),
            rows: part.rows.clone(),
            linearization: catalog.text(id).to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(round6(0.123456789), 0.123457);
        assert_eq!(round6(123456789.0), 123457000.0);
        assert_eq!(round6(-2.0 / 3.0), -0.666667);
        assert_eq!(round6(1e-12 / 3.0), 3.33333e-13);
        assert_eq!(round6(0.0), 0.0);
        assert!(round6(f64::NAN).is_nan());
        #[derive(Serialize)]
        struct W(#[serde(serialize_with = "six")] f64);
        assert_eq!(serde_json::to_string(&W(std::f64::consts::PI)).unwrap(), "3.14159");
    }
}
