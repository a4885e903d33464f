use std::fmt::Write as _;

use super::{Peptide, SeqError};

#[derive(Debug, Clone, PartialEq)]
pub struct FastaEntry {
    /// Header text after the leading '>'.
    pub header: String,
    pub peptide: Peptide,
}

/// Parses FASTA text into peptides, in entry order.
///
/// Residues are upper-cased and all whitespace inside sequence lines is
/// dropped. Sequence text before the first header, or a header with no
/// identifier, is a malformed header.
pub fn parse_fasta(text: &str) -> Result<Vec<Peptide>, SeqError> {
    Ok(parse_fasta_entries(text)?
        .into_iter()
        .map(|e| e.peptide)
        .collect())
}

pub fn parse_fasta_entries(text: &str) -> Result<Vec<FastaEntry>, SeqError> {
    let mut entries = Vec::new();
    let mut current: Option<(String, String)> = None;

    let finish = |entries: &mut Vec<FastaEntry>, header: String, seq: String| {
        let record = entries.len();
        let peptide = Peptide::new(seq).map_err(|e| match e {
            SeqError::NonCanonicalResidue {
                residue, position, ..
            } => SeqError::NonCanonicalResidue {
                residue,
                position,
                record: Some(record),
            },
            SeqError::EmptyPeptide { .. } => SeqError::EmptyPeptide {
                record: Some(record),
            },
            other => other,
        })?;
        entries.push(FastaEntry { header, peptide });
        Ok::<_, SeqError>(())
    };

    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            if let Some((h, s)) = current.take() {
                finish(&mut entries, h, s)?;
            }
            let header = header.trim();
            if header.is_empty() {
                return Err(SeqError::MalformedHeader {
                    record: entries.len(),
                });
            }
            current = Some((header.to_string(), String::new()));
        } else if line.trim().is_empty() {
            continue;
        } else {
            match current.as_mut() {
                Some((_, seq)) => seq.extend(
                    line.chars()
                        .filter(|c| !c.is_whitespace())
                        .map(|c| c.to_ascii_uppercase()),
                ),
                None => {
                    return Err(SeqError::MalformedHeader {
                        record: entries.len(),
                    })
                }
            }
        }
    }
    if let Some((h, s)) = current.take() {
        finish(&mut entries, h, s)?;
    }
    Ok(entries)
}

/// Writes entries as FASTA, one sequence line per entry.
pub fn write_fasta(entries: &[FastaEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, ">{}\n{}", e.header, e.peptide);
    }
    out
}
