//! Combining per-part occurrence distributions with retrieval scores.
//!
//! For the parts that have at least one candidate, `σ = softmax(r)` over
//! their retrieval scores and `p^j_n = σ_j · ρ^j_n`. The score of a normalized
//! string is `s(a) = Σ p^j_n` over its occurrences, so Σ_a s(a) = 1.

use serde::{Deserialize, Serialize};

use super::candidates::CandidateOccurrence;
use crate::catalog::PartId;
use crate::dense::train::softmax;
use crate::error::{Error, Result};
use crate::evidence::GoldSet;

/// ρ = softmax(logits) over one part's occurrences.
pub fn score_part(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(softmax(logits))
}

/// One retrieved part after reading.
#[derive(Debug, Clone, PartialEq)]
pub struct PartReading {
    pub part: PartId,
    pub retrieval_score: f64,
    pub occurrences: Vec<CandidateOccurrence>,
    /// Same length as `occurrences`.
    pub occurrence_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub part: PartId,
    pub span: (usize, usize),
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub normalized: String,
    /// First surface form seen, for display.
    pub surface: String,
    pub score: f64,
    pub provenance: Vec<Provenance>,
}

/// Weights σ_j of the parts that have candidates; 0 for the others.
pub fn part_weights(readings: &[PartReading]) -> Vec<f64> {
    let live: Vec<usize> = (0..readings.len()).filter(|&j| !readings[j].occurrences.is_empty()).collect();
    let part_probs = softmax(&live.iter().map(|&j| readings[j].retrieval_score).collect::<Vec<_>>());
    let mut out = vec![0.0; readings.len()];
    for (&j, s) in live.iter().zip(part_probs) {
        out[j] = s;
    }
    out
}

/// Ranked answers by descending `s(a)`, ties by normalized string. Empty
/// when no part has a candidate.
pub fn aggregate(readings: &[PartReading]) -> Vec<RankedAnswer> {
    let part_probs = part_weights(readings);
    let mut answers: Vec<RankedAnswer> = Vec::new();
    let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (reading, &s) in readings.iter().zip(&part_probs) {
        for (occ, &occurrence_probs) in reading.occurrences.iter().zip(&reading.occurrence_probs) {
            let p = s * occurrence_probs;
            let at = *index.entry(occ.normalized.as_str()).or_insert_with(|| {
                answers.push(RankedAnswer {
                    normalized: occ.normalized.clone(),
                    surface: occ.surface.clone(),
                    score: 0.0,
                    provenance: Vec::new(),
                });
                answers.len() - 1
            });
            let a = &mut answers[at];
            a.score += p;
            a.provenance.push(Provenance { part: reading.part, span: occ.span, contribution: p });
        }
    }
    answers.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.normalized.cmp(&b.normalized)));
    answers
}

/// `−Σ ln s(a)` over gold strings that occur among the answers; `None` when
/// no gold string is a candidate (the instance is skipped).
pub fn reader_loss(answers: &[RankedAnswer], gold: &GoldSet) -> Option<f64> {
    let present: Vec<f64> =
        answers.iter().filter(|a| gold.contains_normalized(&a.normalized)).map(|a| a.score).collect();
    if present.is_empty() {
        return None;
    }
    Some(-present.iter().map(|s| s.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reader::candidates::FieldKind;
    use crate::table::NormalizationPolicy;

    fn occ(part: PartId, s: &str) -> CandidateOccurrence {
        CandidateOccurrence {
            part_id: part,
            span: (0, s.len()),
            surface: s.into(),
            normalized: s.into(),
            field_kind: FieldKind::Cell,
            row: Some(0),
            col: 0,
        }
    }

    fn reading(part: PartId, r: f64, cands: &[&str], occurrence_probs: &[f64]) -> PartReading {
        PartReading {
            part,
            retrieval_score: r,
            occurrences: cands.iter().map(|c| occ(part, c)).collect(),
            occurrence_probs: occurrence_probs.to_vec(),
        }
    }

    #[test]
    fn two_parts_worked_example() {
        let answers = aggregate(&[reading(0, 0.0, &["1979"], &[1.0]), reading(1, 0.0, &["1979", "1977"], &[0.5, 0.5])]);
        assert_eq!(answers[0].normalized, "1979");
        assert!((answers[0].score - 0.75).abs() < 1e-12);
        assert!((answers[1].score - 0.25).abs() < 1e-12);
        assert_eq!(answers[0].provenance.len(), 2);
    }

    #[test]
    fn part_softmax_examples() {
        assert_eq!(score_part(&[3.2]).unwrap(), vec![1.0]);
        assert_eq!(score_part(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let occurrence_probs = score_part(&[2f64.ln(), 0.0]).unwrap();
        assert!((occurrence_probs[0] - 2.0 / 3.0).abs() < 1e-12 && (occurrence_probs[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(score_part(&[]), Err(Error::NoCandidates)));
    }

    #[test]
    fn parts_without_candidates_drop_out() {
        let answers = aggregate(&[reading(0, 5.0, &[], &[]), reading(1, 0.0, &["x"], &[1.0])]);
        assert_eq!(answers.len(), 1);
        assert_eq!(answers[0].score, 1.0);
        assert!(aggregate(&[reading(0, 1.0, &[], &[])]).is_empty());
    }

    #[test]
    fn losses() {
        let gold =
            |g: &[&str]| GoldSet::new(&g.iter().map(|s| s.to_string()).collect::<Vec<_>>(), NormalizationPolicy::None);
        let single = aggregate(&[reading(0, 0.0, &["a"], &[1.0])]);
        assert_eq!(reader_loss(&single, &gold(&["a"])), Some(0.0));
        let halves = aggregate(&[reading(0, 0.0, &["a", "b"], &[0.5, 0.5])]);
        assert!((reader_loss(&halves, &gold(&["a"])).unwrap() - 2f64.ln()).abs() < 1e-12);
        let mix = aggregate(&[reading(0, 0.0, &["a", "b", "c"], &[0.5, 0.25, 0.25])]);
        let l = reader_loss(&mix, &gold(&["a", "b", "zzz"])).unwrap();
        assert!((l + 0.5f64.ln() + 0.25f64.ln()).abs() < 1e-12);
        assert_eq!(reader_loss(&mix, &gold(&["zzz"])), None);
    }
}
