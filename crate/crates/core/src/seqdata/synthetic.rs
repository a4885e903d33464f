//! Synthetic epitope corpus with a planted immunogenic signal.
//!
//! Three label-bearing features are planted, each present in a positive with
//! probability `signal_strength` and in a negative with probability
//! `1 - signal_strength`, independently:
//!
//! * the motif, at a random offset clear of the anchor positions;
//! * a hydrophobic anchor (L/M) at position 2;
//! * a hydrophobic anchor (V/L) at the C-terminus.
//!
//! When a feature is absent it is actively excluded (the motif never occurs
//! by chance, anchor slots draw from the remaining residues), so at
//! `signal_strength = 0.5` the peptide carries no information about the label
//! and at `1.0` the label is a deterministic function of the peptide.
//!
//! Affinities are log-uniform in [10, 100] nM for positives and
//! [500, 50 000] nM for negatives; conservation is uniform in [60, 100] % for
//! positives and [30, 90] % for negatives.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{residue_index, Dataset, EpitopeRecord, Peptide, SeqError, DEFAULT_PEPTIDE_LEN};

pub const DEFAULT_MOTIF: &str = "WKY";

/// Alleles assigned uniformly to generated records.
pub const SYNTHETIC_ALLELES: [&str; 3] = ["HLA-A*02:01", "HLA-A*03:01", "HLA-B*07:02"];

const P2_ANCHORS: &[u8] = b"LM";
const CTERM_ANCHORS: &[u8] = b"VL";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub motif: Peptide,
    pub signal_strength: f64,
    pub seed: u64,
    pub peptide_len: usize,
}

impl SyntheticConfig {
    pub fn new(n: usize, motif: Peptide, signal_strength: f64, seed: u64) -> Self {
        SyntheticConfig {
            n,
            motif,
            signal_strength,
            seed,
            peptide_len: DEFAULT_PEPTIDE_LEN,
        }
    }

    pub fn generate(&self) -> Result<Dataset, SeqError> {
        generate(self)
    }
}

/// Generates `n` records of the default length 9; see the module docs for
/// the planted signal.
pub fn generate_synthetic(
    n: usize,
    motif: &Peptide,
    signal_strength: f64,
    seed: u64,
) -> Result<Dataset, SeqError> {
    SyntheticConfig::new(n, motif.clone(), signal_strength, seed).generate()
}

fn generate(cfg: &SyntheticConfig) -> Result<Dataset, SeqError> {
    let len = cfg.peptide_len;
    let m = cfg.motif.len();
    if cfg.n < 4 {
        return Err(SeqError::Invalid(format!("need at least 4 records, got {}", cfg.n)));
    }
    if m == 0 {
        return Err(SeqError::Invalid("empty motif".into()));
    }
    if m >= len {
        return Err(SeqError::Invalid(format!(
            "motif length {m} must be shorter than peptide length {len}"
        )));
    }
    if len < 3 {
        return Err(SeqError::Invalid(format!("peptide length {len} below 3")));
    }
    if !(0.0..=1.0).contains(&cfg.signal_strength) {
        return Err(SeqError::Invalid(format!(
            "signal_strength {} outside [0, 1]",
            cfg.signal_strength
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motif = cfg.motif.indices();
    let p2: Vec<usize> = P2_ANCHORS.iter().map(|&b| residue_index(b).unwrap()).collect();
    let ct: Vec<usize> = CTERM_ANCHORS.iter().map(|&b| residue_index(b).unwrap()).collect();
    let non = |anchors: &[usize]| -> Vec<usize> { (0..20).filter(|i| !anchors.contains(i)).collect() };
    let (p2_non, ct_non) = (non(&p2), non(&ct));

    // Motif offsets that leave both anchor slots untouched, when there is room.
    let offsets: Vec<usize> = if m + 3 <= len {
        (2..=len - 1 - m).collect()
    } else {
        (0..=len - m).collect()
    };

    let n_pos = cfg.n / 2;
    let mut seen = HashSet::with_capacity(cfg.n);
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let positive = i < n_pos;
        let p_feature = if positive {
            cfg.signal_strength
        } else {
            1.0 - cfg.signal_strength
        };
        let allele = SYNTHETIC_ALLELES[rng.gen_range(0..SYNTHETIC_ALLELES.len())];
        let peptide = loop {
            let has_motif = rng.gen_bool(p_feature);
            let has_p2 = rng.gen_bool(p_feature);
            let has_ct = rng.gen_bool(p_feature);
            let mut res: Vec<usize> = (0..len).map(|_| rng.gen_range(0..20)).collect();
            res[1] = *if has_p2 { &p2 } else { &p2_non }.choose(&mut rng).unwrap();
            res[len - 1] = *if has_ct { &ct } else { &ct_non }.choose(&mut rng).unwrap();
            if has_motif {
                let off = *offsets.choose(&mut rng).unwrap();
                res[off..off + m].copy_from_slice(&motif);
            } else if res.windows(m).any(|w| w == motif.as_slice()) {
                continue;
            }
            let p = Peptide::from_indices(&res);
            if seen.insert((p.clone(), allele)) {
                break p;
            }
        };
        let (lo, hi, cons_lo, cons_hi) = if positive {
            (10f64, 100f64, 60.0, 100.0)
        } else {
            (500f64, 50_000f64, 30.0, 90.0)
        };
        let affinity_nm = 10f64.powf(rng.gen_range(lo.log10()..=hi.log10()));
        let conservation_pct = rng.gen_range(cons_lo..=cons_hi);
        records.push(EpitopeRecord {
            peptide,
            hla_allele: allele.to_string(),
            affinity_nm,
            conservation_pct,
            immunogenic: positive,
            score: None,
        });
    }
    records.shuffle(&mut rng);
    Ok(Dataset::new(records))
}
