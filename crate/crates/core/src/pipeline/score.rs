use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::seqdata::{EpitopeRecord, Peptide};
use crate::{Error, Result};

/// Anything that can attach an immunogenicity probability and a
/// reconstruction error to a peptide.
pub trait EpitopeScorer {
    /// One `(immunogenicity_prob, reconstruction_error)` pair per peptide.
    fn score_peptides(&self, peptides: &[Peptide]) -> Result<Vec<(f64, f64)>>;
}

impl EpitopeScorer for crate::predictor::Model1 {
    /// Immunogenicity head only; Model 1 has no reconstruction term.
    fn score_peptides(&self, peptides: &[Peptide]) -> Result<Vec<(f64, f64)>> {
        Ok(self.predict(peptides)?.into_iter().map(|o| (o.immunogenicity_prob, 0.0)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    pub imm: f64,
    pub cons: f64,
    pub rec: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            imm: 1.0,
            cons: 0.25,
            rec: 0.25,
        }
    }
}

impl RankWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.imm, self.cons, self.rec];
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid("rank weights must be non-negative and finite"));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::invalid("rank weights must not all be zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub immunogenicity: f64,
    pub conservation: f64,
    /// Reconstruction error divided by the largest one in the scored batch.
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorScore {
    pub epitope: EpitopeRecord,
    pub priority: f64,
    pub components: ScoreComponents,
}

impl SelectorScore {
    pub fn from_components(epitope: EpitopeRecord, c: ScoreComponents, w: &RankWeights) -> Self {
        let priority = w.imm * c.immunogenicity + w.cons * c.conservation - w.rec * c.reconstruction_error;
        SelectorScore {
            epitope,
            priority,
            components: c,
        }
    }

    pub fn peptide(&self) -> &str {
        self.epitope.peptide.as_str()
    }
}

/// Priority descending, then peptide, then allele.
pub fn rank_order(a: &SelectorScore, b: &SelectorScore) -> Ordering {
    b.priority
        .total_cmp(&a.priority)
        .then_with(|| a.peptide().cmp(b.peptide()))
        .then_with(|| a.epitope.hla_allele.cmp(&b.epitope.hla_allele))
}

/// Scores and sorts `records`.
///
/// A record's own `score` field is used as its immunogenicity when present;
/// otherwise the selector's head supplies it. Reconstruction errors come from
/// the selector and are 0 without one.
pub fn score_epitopes(
    selector: Option<&dyn EpitopeScorer>,
    records: &[EpitopeRecord],
    weights: &RankWeights,
) -> Result<Vec<SelectorScore>> {
    weights.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("no records to score"));
    }
    let model = match selector {
        Some(s) => {
            let peptides: Vec<Peptide> = records.iter().map(|r| r.peptide.clone()).collect();
            Some(s.score_peptides(&peptides)?)
        }
        None => None,
    };
    let max_rec = model
        .as_ref()
        .map(|m| m.iter().map(|x| x.1).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let (imm, rec) = match (&model, r.score) {
            (Some(m), s) => (s.unwrap_or(m[i].0), m[i].1),
            (None, Some(s)) => (s, 0.0),
            (None, None) => {
                return Err(Error::invalid(format!(
                    "record {} ({}) has no score and no selector was given",
                    i + 1,
                    r.peptide
                )))
            }
        };
        let c = ScoreComponents {
            immunogenicity: imm,
            conservation: r.conservation_fraction(),
            reconstruction_error: if max_rec > 0.0 { rec / max_rec } else { 0.0 },
        };
        if !(imm.is_finite() && c.reconstruction_error.is_finite()) {
            return Err(Error::numeric(format!("non-finite score for {}", r.peptide)));
        }
        out.push(SelectorScore::from_components(r.clone(), c, weights));
    }
    out.sort_by(rank_order);
    Ok(out)
}

pub fn scores_csv(scores: &[SelectorScore]) -> String {
    let mut s = String::from("peptide,priority,imm,cons,rec_err\n");
    for x in scores {
        let c = &x.components;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            x.peptide(),
            x.priority,
            c.immunogenicity,
            c.conservation,
            c.reconstruction_error
        );
    }
    s
}
