//! Multi-epitope candidate assembly under HLA-supertype coverage.
//!
//! Selection is greedy: while slots remain, take the best epitope that covers
//! a still-uncovered required supertype; then fill the remaining slots with
//! the best epitopes left. "Best" is [`rank_order`]: priority, then peptide
//! text. When the same peptide appears more than once in the pool only its
//! best entry is considered.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::pipeline::{rank_order, SelectorScore};
use crate::{Error, Result};

/// Bundled allele → supertype table. Keys omit the `HLA-` prefix.
pub const DEFAULT_ALLELE_TABLE: &[(&str, &str)] = &[
    ("A*01:01", "A1"),
    ("A*02:01", "A2"),
    ("A*02:02", "A2"),
    ("A*02:03", "A2"),
    ("A*02:06", "A2"),
    ("A*68:02", "A2"),
    ("A*03:01", "A3"),
    ("A*11:01", "A3"),
    ("A*31:01", "A3"),
    ("A*33:01", "A3"),
    ("A*68:01", "A3"),
    ("A*24:02", "A24"),
    ("B*07:02", "B7"),
    ("B*35:01", "B7"),
    ("B*51:01", "B7"),
    ("B*53:01", "B7"),
    ("B*08:01", "B8"),
    ("B*27:05", "B27"),
    ("B*44:02", "B44"),
    ("B*58:01", "B58"),
    ("B*15:01", "B62"),
];

fn normalize_allele(allele: &str) -> &str {
    let a = allele.trim();
    a.strip_prefix("HLA-").unwrap_or(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupertypeRequirement {
    pub required: BTreeSet<String>,
    pub allele_map: BTreeMap<String, String>,
}

impl Default for SupertypeRequirement {
    fn default() -> Self {
        SupertypeRequirement {
            required: ["A2", "A3", "B7"].into_iter().map(String::from).collect(),
            allele_map: DEFAULT_ALLELE_TABLE
                .iter()
                .map(|(a, s)| (a.to_string(), s.to_string()))
                .collect(),
        }
    }
}

impl SupertypeRequirement {
    pub fn with_required<I, S>(required: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SupertypeRequirement {
            required: required.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    pub fn supertype_of(&self, allele: &str) -> Option<&str> {
        self.allele_map.get(normalize_allele(allele)).map(String::as_str)
    }

    /// Required supertypes that no allele in the table maps to.
    pub fn uncoverable(&self) -> BTreeSet<String> {
        let values: BTreeSet<&String> = self.allele_map.values().collect();
        self.required.iter().filter(|s| !values.contains(s)).cloned().collect()
    }

    /// The required supertype `e` covers, if any.
    fn covers(&self, e: &SelectorScore) -> Option<String> {
        self.supertype_of(&e.epitope.hla_allele)
            .filter(|s| self.required.contains(*s))
            .map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VaccineCandidate {
    pub epitopes: Vec<SelectorScore>,
    /// Required supertype → indices into `epitopes`.
    pub coverage: BTreeMap<String, Vec<usize>>,
    pub missing: BTreeSet<String>,
    pub total_priority: f64,
}

impl VaccineCandidate {
    /// A candidate with no epitopes: everything is missing.
    pub fn empty(req: &SupertypeRequirement) -> Self {
        VaccineCandidate {
            epitopes: Vec::new(),
            coverage: BTreeMap::new(),
            missing: req.required.clone(),
            total_priority: 0.0,
        }
    }

    fn from_selection(epitopes: Vec<SelectorScore>, req: &SupertypeRequirement) -> Self {
        let mut coverage: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in epitopes.iter().enumerate() {
            if let Some(s) = req.covers(e) {
                coverage.entry(s).or_default().push(i);
            }
        }
        let missing = req.required.iter().filter(|s| !coverage.contains_key(*s)).cloned().collect();
        let total_priority = epitopes.iter().map(|e| e.priority).sum();
        VaccineCandidate {
            epitopes,
            coverage,
            missing,
            total_priority,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate serializes") + "\n"
    }
}

/// Pool sorted by [`rank_order`] with repeated peptides dropped.
fn distinct_pool(pool: &[SelectorScore]) -> Vec<&SelectorScore> {
    let mut sorted: Vec<&SelectorScore> = pool.iter().collect();
    sorted.sort_by(|a, b| rank_order(a, b));
    let mut seen = HashSet::new();
    sorted.retain(|e| seen.insert(e.peptide().to_string()));
    sorted
}

pub fn assemble(pool: &[SelectorScore], req: &SupertypeRequirement, k: usize) -> Result<VaccineCandidate> {
    if pool.is_empty() {
        return Err(Error::invalid("epitope pool is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if let Some(e) = pool.iter().find(|e| !e.priority.is_finite()) {
        return Err(Error::invalid(format!("non-finite priority for {}", e.peptide())));
    }
    let candidates = distinct_pool(pool);
    let mut taken = vec![false; candidates.len()];
    let mut covered = BTreeSet::new();
    let mut chosen = Vec::new();

    while chosen.len() < k {
        let next = candidates.iter().enumerate().find(|(i, e)| {
            !taken[*i] && req.covers(e).is_some_and(|s| !covered.contains(&s))
        });
        let Some((i, e)) = next else { break };
        taken[i] = true;
        covered.insert(req.covers(e).expect("checked above"));
        chosen.push((*e).clone());
    }
    for (i, e) in candidates.iter().enumerate() {
        if chosen.len() >= k {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            chosen.push((*e).clone());
        }
    }
    Ok(VaccineCandidate::from_selection(chosen, req))
}

/// Aligned plain-text table, one row per required supertype.
pub fn coverage_report(c: &VaccineCandidate, req: &SupertypeRequirement) -> String {
    let mut rows: Vec<[String; 3]> = vec![["supertype".into(), "peptide".into(), "allele".into()]];
    for s in &req.required {
        match c.coverage.get(s) {
            Some(idx) => {
                let peps: Vec<&str> = idx.iter().map(|&i| c.epitopes[i].peptide()).collect();
                let alleles: Vec<&str> = idx.iter().map(|&i| c.epitopes[i].epitope.hla_allele.as_str()).collect();
                rows.push([s.clone(), peps.join(","), alleles.join(",")]);
            }
            None => rows.push([s.clone(), "MISSING".into(), "-".into()]),
        }
    }
    let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in &rows {
        let _ = writeln!(out, "{:<w0$}  {:<w1$}  {}", r[0], r[1], r[2]);
    }
    let _ = writeln!(out, "total_priority  {:.6}", c.total_priority);
    out
}
