//! Sequence and dataset domain types.
//!
//! [`Peptide`] is a validated amino-acid string, [`EpitopeRecord`] is one row
//! of the pipeline (peptide, allele, affinity, conservation, label) and
//! [`Dataset`] is an ordered list of records with an optional train/test
//! partition.

mod fasta;
mod records;
mod split;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fasta::{parse_fasta, parse_fasta_entries, write_fasta, FastaEntry};
pub use records::{load_records, read_records, write_records, RecordFormat};
pub use split::split_dataset;
pub use synthetic::{generate_synthetic, SyntheticConfig, DEFAULT_MOTIF};

/// The 20 canonical one-letter amino-acid codes, in the order used for
/// token indices everywhere in the crate.
pub const AMINO_ACIDS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Default peptide length for generated corpora (a canonical CD8⁺ epitope).
pub const DEFAULT_PEPTIDE_LEN: usize = 9;

/// Token index of a residue in [`AMINO_ACIDS`].
pub fn residue_index(residue: u8) -> Option<usize> {
    AMINO_ACIDS.iter().position(|&a| a == residue)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeqError {
    #[error("malformed FASTA header at record {record}")]
    MalformedHeader { record: usize },

    #[error("non-canonical residue {residue:?} at position {position}{}", record.map(|r| format!(" of record {r}")).unwrap_or_default())]
    NonCanonicalResidue {
        residue: char,
        /// 1-based position in the residue string.
        position: usize,
        record: Option<usize>,
    },

    #[error("empty peptide{}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    EmptyPeptide { record: Option<usize> },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("row {row}: cannot parse {column} value {value:?}")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),

    #[error("dataset of {0} records cannot give non-empty train and test splits")]
    TooSmall(usize),

    #[error("duplicate (peptide, allele) pair ({peptide}, {allele})")]
    DuplicatePair { peptide: String, allele: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{0}")]
    Io(String),
}

/// A non-empty string over the 20 canonical amino acids, stored upper-case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Peptide(String);

impl Peptide {
    /// Validates `residues` as-is (no case folding, no whitespace removal).
    pub fn new(residues: impl Into<String>) -> Result<Self, SeqError> {
        let residues = residues.into();
        if residues.is_empty() {
            return Err(SeqError::EmptyPeptide { record: None });
        }
        if let Some((i, c)) = residues
            .chars()
            .enumerate()
            .find(|&(_, c)| !c.is_ascii() || residue_index(c as u8).is_none())
        {
            return Err(SeqError::NonCanonicalResidue {
                residue: c,
                position: i + 1,
                record: None,
            });
        }
        Ok(Peptide(residues))
    }

    pub(crate) fn from_indices(indices: &[usize]) -> Self {
        Peptide(indices.iter().map(|&i| AMINO_ACIDS[i] as char).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Token indices into [`AMINO_ACIDS`].
    pub fn indices(&self) -> Vec<usize> {
        self.0
            .bytes()
            .map(|b| residue_index(b).expect("validated residue"))
            .collect()
    }

    pub fn contains(&self, fragment: &Peptide) -> bool {
        self.0.contains(fragment.as_str())
    }
}

impl fmt::Display for Peptide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Peptide {
    type Err = SeqError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Peptide::new(s)
    }
}

impl TryFrom<String> for Peptide {
    type Error = SeqError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Peptide::new(s)
    }
}

impl From<Peptide> for String {
    fn from(p: Peptide) -> String {
        p.0
    }
}

/// One peptide with its restriction allele and measured properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpitopeRecord {
    pub peptide: Peptide,
    pub hla_allele: String,
    /// Binding affinity in nM; lower is stronger.
    pub affinity_nm: f64,
    /// Percentage of strains carrying the peptide, in [0, 100].
    pub conservation_pct: f64,
    #[serde(with = "label_as_int")]
    pub immunogenic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

mod label_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "immunogenic must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl EpitopeRecord {
    /// Checks the numeric invariants; `Err` carries a human-readable reason.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.affinity_nm.is_finite() && self.affinity_nm > 0.0) {
            return Err(format!("affinity_nm must be > 0, got {}", self.affinity_nm));
        }
        if !(0.0..=100.0).contains(&self.conservation_pct) {
            return Err(format!(
                "conservation_pct must be in [0, 100], got {}",
                self.conservation_pct
            ));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("score must be in [0, 1], got {s}"));
            }
        }
        if self.hla_allele.trim().is_empty() {
            return Err("hla_allele is empty".into());
        }
        Ok(())
    }

    pub fn label(&self) -> f64 {
        if self.immunogenic {
            1.0
        } else {
            0.0
        }
    }

    /// Affinity regression target, log10(nM).
    pub fn log_affinity(&self) -> f64 {
        self.affinity_nm.log10()
    }

    pub fn conservation_fraction(&self) -> f64 {
        self.conservation_pct / 100.0
    }
}

/// Train/test partition as sorted index lists into [`Dataset::records`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<EpitopeRecord>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(records: Vec<EpitopeRecord>) -> Self {
        Dataset {
            records,
            split: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train(&self) -> Option<Vec<&EpitopeRecord>> {
        self.split
            .as_ref()
            .map(|s| s.train.iter().map(|&i| &self.records[i]).collect())
    }

    pub fn test(&self) -> Option<Vec<&EpitopeRecord>> {
        self.split
            .as_ref()
            .map(|s| s.test.iter().map(|&i| &self.records[i]).collect())
    }

    pub fn peptides(&self) -> Vec<Peptide> {
        self.records.iter().map(|r| r.peptide.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peptide_rejects_non_canonical() {
        let err = Peptide::new("YLQBRTFLL").unwrap_err();
        assert_eq!(
            err,
            SeqError::NonCanonicalResidue {
                residue: 'B',
                position: 4,
                record: None
            }
        );
        assert!(matches!(
            Peptide::new(""),
            Err(SeqError::EmptyPeptide { .. })
        ));
        assert!(Peptide::new("ylq").is_err());
    }

    #[test]
    fn indices_round_trip() {
        let p = Peptide::new("ACDWY").unwrap();
        assert_eq!(p.indices(), vec![0, 1, 2, 18, 19]);
        assert_eq!(Peptide::from_indices(&p.indices()), p);
    }

    #[test]
    fn record_validation() {
        let mut r = EpitopeRecord {
            peptide: Peptide::new("YLQPRTFLL").unwrap(),
            hla_allele: "HLA-A*02:01".into(),
            affinity_nm: 35.7,
            conservation_pct: 94.5,
            immunogenic: true,
            score: Some(0.98),
        };
        assert!(r.validate().is_ok());
        r.affinity_nm = -1.0;
        assert!(r.validate().is_err());
        r.affinity_nm = 1.0;
        r.conservation_pct = 100.5;
        assert!(r.validate().is_err());
        r.conservation_pct = 50.0;
        r.score = Some(1.5);
        assert!(r.validate().is_err());
    }
}
