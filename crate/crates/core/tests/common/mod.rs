#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use immuno_core::numcore::{grad_check, DenseArray, Layer, Mode, NumError, ParamStore};
use immuno_core::pipeline::{ScoreComponents, SelectorScore};
use immuno_core::seqdata::{EpitopeRecord, Peptide, AMINO_ACIDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn random_peptide(r: &mut impl Rng, len: usize) -> Peptide {
    let s: String = (0..len).map(|_| AMINO_ACIDS[r.gen_range(0..20)] as char).collect();
    s.parse().unwrap()
}

pub fn record(peptide: &str, allele: &str) -> EpitopeRecord {
    EpitopeRecord {
        peptide: peptide.parse().unwrap(),
        hla_allele: allele.into(),
        affinity_nm: 50.0,
        conservation_pct: 90.0,
        immunogenic: true,
        score: None,
    }
}

pub fn pool_entry(peptide: &str, allele: &str, priority: f64) -> SelectorScore {
    SelectorScore {
        epitope: record(peptide, allele),
        priority,
        components: ScoreComponents {
            immunogenicity: priority,
            conservation: 0.9,
            reconstruction_error: 0.0,
        },
    }
}

/// Alleles drawn for random pools, with the required supertype each one
/// counts toward (None for alleles outside A2/A3/B7 or unknown ones).
pub const ORACLE_ALLELES: &[(&str, Option<&str>)] = &[
    ("HLA-A*02:01", Some("A2")),
    ("HLA-A*68:02", Some("A2")),
    ("HLA-A*03:01", Some("A3")),
    ("HLA-A*11:01", Some("A3")),
    ("HLA-B*07:02", Some("B7")),
    ("HLA-B*35:01", Some("B7")),
    ("HLA-A*01:01", None),
    ("HLA-B*44:02", None),
    ("HLA-C*07:01", None),
];

fn oracle_supertype(allele: &str) -> Option<&'static str> {
    ORACLE_ALLELES.iter().find(|(a, _)| *a == allele).and_then(|(_, s)| *s)
}

/// Pool of `n` entries with distinct peptides.
pub fn random_pool(r: &mut impl Rng, n: usize) -> Vec<SelectorScore> {
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(n);
    while pool.len() < n {
        let p = random_peptide(r, 9);
        if !seen.insert(p.clone()) {
            continue;
        }
        let (allele, _) = ORACLE_ALLELES[r.gen_range(0..ORACLE_ALLELES.len())];
        pool.push(pool_entry(p.as_str(), allele, r.gen_range(-0.5..1.5)));
    }
    pool
}

pub fn covered(selection: &[&SelectorScore]) -> usize {
    selection
        .iter()
        .filter_map(|e| oracle_supertype(&e.epitope.hla_allele))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Best (coverage count, total priority) over every subset of size
/// `min(k, pool.len())`.
pub fn exhaustive_best(pool: &[SelectorScore], k: usize) -> (usize, f64) {
    let size = k.min(pool.len());
    let mut best = (0usize, f64::NEG_INFINITY);
    for mask in 0u32..(1 << pool.len()) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let pick: Vec<&SelectorScore> = (0..pool.len()).filter(|i| mask & (1 << i) != 0).map(|i| &pool[i]).collect();
        let cov = covered(&pick);
        let total: f64 = pick.iter().map(|e| e.priority).sum();
        if cov > best.0 || (cov == best.0 && total > best.1) {
            best = (cov, total);
        }
    }
    best
}

/// Central-difference check of a layer's input and parameter gradients for
/// `loss = Σ cᵢ yᵢ` with random coefficients. Dropout draws the same mask on
/// every evaluation (fresh rng with a fixed seed).
pub fn layer_grad_error(layer: &Layer, input: DenseArray, mode: Mode, seed: u64, perturb_input: bool) -> f64 {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    layer.init(&mut store, &mut r).unwrap();
    for (_, p) in store.iter_mut() {
        for v in p.value.data_mut() {
            *v += r.gen_range(-0.1..0.1);
        }
    }
    let (probe, _) = layer.forward(&store, &input, mode, &mut rng(0)).unwrap();
    let coeffs: Vec<f64> = (0..probe.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    if perturb_input {
        store.insert("probe_input", input.clone());
    }
    let layer = layer.clone();
    grad_check(
        move |s: &mut ParamStore| -> Result<f64, NumError> {
            let x = if perturb_input { s.value("probe_input")?.clone() } else { input.clone() };
            let (y, cache) = layer.forward(s, &x, mode, &mut rng(0))?;
            let loss = y.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum();
            let dx = layer.backward(s, &cache, &DenseArray::from_vec(y.shape(), coeffs.clone())?)?;
            if perturb_input {
                s.grad_mut("probe_input")?.add_assign(&dx);
            }
            Ok(loss)
        },
        &mut store,
        50,
        seed,
    )
    .unwrap()
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DenseArray {
    DenseArray::from_vec(&[rows, cols], (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn immuno(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immuno"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawn immuno")
}

pub fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = immuno(cwd, args);
    assert!(
        out.status.success(),
        "immuno {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Relative path → bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}
