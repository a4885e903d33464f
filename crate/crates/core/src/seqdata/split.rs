use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SeqError, Split};

/// Seeded shuffle, then a prefix cut of `round(train_fraction * N)` records.
///
/// Datasets holding the same (peptide, allele) pair twice are rejected, since
/// one copy could land on each side of the cut.
pub fn split_dataset(
    mut d: Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<Dataset, SeqError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SeqError::InvalidFraction(train_fraction));
    }
    let n = d.records.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n < 2 || n_train == 0 || n_train >= n {
        return Err(SeqError::TooSmall(n));
    }

    let mut seen = HashSet::with_capacity(n);
    for r in &d.records {
        if !seen.insert((r.peptide.as_str(), r.hla_allele.as_str())) {
            return Err(SeqError::DuplicatePair {
                peptide: r.peptide.to_string(),
                allele: r.hla_allele.clone(),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    d.split = Some(Split { train, test });
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::{EpitopeRecord, Peptide};
    use proptest::prelude::*;

    fn dataset(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| EpitopeRecord {
                peptide: Peptide::from_indices(&[i % 20, (i / 20) % 20, (i / 400) % 20]),
                hla_allele: "HLA-A*02:01".into(),
                affinity_nm: 10.0,
                conservation_pct: 50.0,
                immunogenic: i % 2 == 0,
                score: None,
            })
            .collect();
        Dataset::new(records)
    }

    #[test]
    fn eighty_twenty() {
        let d = split_dataset(dataset(100), 0.8, 7).unwrap();
        let s = d.split.unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
    }

    #[test]
    fn deterministic() {
        let a = split_dataset(dataset(100), 0.8, 7).unwrap();
        let b = split_dataset(dataset(100), 0.8, 7).unwrap();
        assert_eq!(a.split, b.split);
        let c = split_dataset(dataset(100), 0.8, 8).unwrap();
        assert_ne!(a.split, c.split);
    }

    #[test]
    fn every_record_tested_under_some_seed() {
        let mut tested = [false; 10];
        for seed in 1..=50 {
            let s = split_dataset(dataset(10), 0.8, seed).unwrap().split.unwrap();
            for i in s.test {
                tested[i] = true;
            }
        }
        assert!(tested.iter().all(|&t| t));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            split_dataset(dataset(10), 1.0, 1).unwrap_err(),
            SeqError::InvalidFraction(1.0)
        );
        assert_eq!(
            split_dataset(dataset(10), 0.0, 1).unwrap_err(),
            SeqError::InvalidFraction(0.0)
        );
        assert_eq!(
            split_dataset(dataset(1), 0.5, 1).unwrap_err(),
            SeqError::TooSmall(1)
        );
        // round(0.97 * 10) = 10 leaves no test record
        assert_eq!(
            split_dataset(dataset(10), 0.97, 1).unwrap_err(),
            SeqError::TooSmall(10)
        );
        let mut d = dataset(5);
        d.records.push(d.records[0].clone());
        assert!(matches!(
            split_dataset(d, 0.5, 1).unwrap_err(),
            SeqError::DuplicatePair { .. }
        ));
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            match split_dataset(dataset(n), frac, seed) {
                Ok(d) => {
                    let s = d.split.unwrap();
                    prop_assert_eq!(s.train.len(), (frac * n as f64).round() as usize);
                    let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                }
                Err(SeqError::TooSmall(_)) => {
                    let k = (frac * n as f64).round() as usize;
                    prop_assert!(k == 0 || k >= n);
                }
                Err(e) => prop_assert!(false, "unexpected {e:?}"),
            }
        }
    }
}
