//! CSV and JSON-lines record files.

use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Dataset, EpitopeRecord, Peptide, SeqError};

const REQUIRED: [&str; 5] = [
    "peptide",
    "hla_allele",
    "affinity_nm",
    "conservation_pct",
    "immunogenic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl RecordFormat {
    /// Guesses from the file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => RecordFormat::Jsonl,
            _ => RecordFormat::Csv,
        }
    }
}

impl FromStr for RecordFormat {
    type Err = SeqError;
    fn from_str(s: &str) -> Result<Self, SeqError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" => Ok(RecordFormat::Jsonl),
            other => Err(SeqError::Invalid(format!("unknown record format {other:?}"))),
        }
    }
}

pub fn load_records(path: impl AsRef<Path>, format: RecordFormat) -> Result<Dataset, SeqError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| SeqError::Io(format!("{}: {e}", path.display())))?;
    read_records(std::io::BufReader::new(file), format)
}

/// Reads records from any reader. Row numbers in errors are 1-based data
/// rows (the CSV header is not counted).
pub fn read_records<R: Read>(reader: R, format: RecordFormat) -> Result<Dataset, SeqError> {
    let records = match format {
        RecordFormat::Csv => read_csv(reader)?,
        RecordFormat::Jsonl => read_jsonl(reader)?,
    };
    Ok(Dataset::new(records))
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<EpitopeRecord>, SeqError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SeqError::Io(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| SeqError::MissingColumn(name.to_string()))?;
    }
    let score_col = col("score");

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| SeqError::InvalidRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let num = |c: usize, name: &str| -> Result<f64, SeqError> {
            let raw = field(c);
            raw.parse::<f64>().map_err(|_| SeqError::BadNumber {
                row: row_no,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let peptide = Peptide::new(field(idx[0]).to_ascii_uppercase()).map_err(|e| {
            SeqError::InvalidRow {
                row: row_no,
                reason: e.to_string(),
            }
        })?;
        let immunogenic = match field(idx[4]) {
            "1" => true,
            "0" => false,
            other => {
                return Err(SeqError::BadNumber {
                    row: row_no,
                    column: "immunogenic".into(),
                    value: other.to_string(),
                })
            }
        };
        let score = match score_col.map(field) {
            None | Some("") => None,
            Some(raw) => Some(raw.parse::<f64>().map_err(|_| SeqError::BadNumber {
                row: row_no,
                column: "score".into(),
                value: raw.to_string(),
            })?),
        };
        let rec = EpitopeRecord {
            peptide,
            hla_allele: field(idx[1]).to_string(),
            affinity_nm: num(idx[2], "affinity_nm")?,
            conservation_pct: num(idx[3], "conservation_pct")?,
            immunogenic,
            score,
        };
        rec.validate()
            .map_err(|reason| SeqError::InvalidRow { row: row_no, reason })?;
        out.push(rec);
    }
    Ok(out)
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<EpitopeRecord>, SeqError> {
    let mut out = Vec::new();
    let reader = std::io::BufReader::new(reader);
    let mut row_no = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| SeqError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        row_no += 1;
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| SeqError::InvalidRow {
                row: row_no,
                reason: e.to_string(),
            })?;
        if let Some(missing) = REQUIRED.iter().find(|k| value.get(**k).is_none()) {
            return Err(SeqError::MissingColumn(missing.to_string()));
        }
        let rec: EpitopeRecord =
            serde_json::from_value(value).map_err(|e| SeqError::InvalidRow {
                row: row_no,
                reason: e.to_string(),
            })?;
        rec.validate()
            .map_err(|reason| SeqError::InvalidRow { row: row_no, reason })?;
        out.push(rec);
    }
    Ok(out)
}

/// Serializes records. Numbers use the shortest round-trip representation,
/// so a reload reproduces every value bit-exactly. The CSV `score` column is
/// written only when at least one record carries a score.
pub fn write_records<W: Write>(
    records: &[EpitopeRecord],
    format: RecordFormat,
    mut writer: W,
) -> Result<(), SeqError> {
    let io = |e: std::io::Error| SeqError::Io(e.to_string());
    match format {
        RecordFormat::Csv => {
            let with_score = records.iter().any(|r| r.score.is_some());
            let mut w = csv::Writer::from_writer(writer);
            let mut header: Vec<&str> = REQUIRED.to_vec();
            if with_score {
                header.push("score");
            }
            w.write_record(&header)
                .map_err(|e| SeqError::Io(e.to_string()))?;
            for r in records {
                let mut row = vec![
                    r.peptide.to_string(),
                    r.hla_allele.clone(),
                    r.affinity_nm.to_string(),
                    r.conservation_pct.to_string(),
                    u8::from(r.immunogenic).to_string(),
                ];
                if with_score {
                    row.push(r.score.map(|s| s.to_string()).unwrap_or_default());
                }
                w.write_record(&row)
                    .map_err(|e| SeqError::Io(e.to_string()))?;
            }
            w.flush().map_err(io)?;
        }
        RecordFormat::Jsonl => {
            for r in records {
                let line = serde_json::to_string(r).map_err(|e| SeqError::Io(e.to_string()))?;
                writeln!(writer, "{line}").map_err(io)?;
            }
            writer.flush().map_err(io)?;
        }
    }
    Ok(())
}
