//! Akshara recognition: classify every stroke, then look the label sequence
//! up in the rule set, optionally falling back through a k-best lattice.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Serialize, Serializer};

use crate::classifier::{Classification, StrokeClassifier};
use crate::error::{Error, Result};
use crate::ink::{InkTrace, MAX_AKSHARA_STROKES};
use crate::rules::{compose, Composition, RuleSet};

/// Writes −∞ (and any other non-finite score) as `null`.
fn score<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn scores<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&if x.is_finite() { Some(*x) } else { None })?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredLabel {
    pub label: String,
    #[serde(serialize_with = "score")]
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrokeResult {
    /// Top-k labels, best first.
    pub ranked: Vec<ScoredLabel>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognitionResult {
    pub strokes: Vec<StrokeResult>,
    /// Label sequence the akshara was composed from, or the top-1 sequence
    /// when nothing composed.
    pub sequence: Vec<String>,
    /// Per-stroke rank (0-based) of each chosen label.
    pub ranks: Vec<usize>,
    #[serde(serialize_with = "scores")]
    pub log_likelihoods: Vec<f64>,
    pub akshara: Option<Composition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RecognitionResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

#[derive(PartialEq)]
struct Node {
    total: f64,
    ranks: Vec<usize>,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on total; on ties the lexicographically smaller rank
        // vector comes out first.
        self.total
            .total_cmp(&other.total)
            .then_with(|| other.ranks.cmp(&self.ranks))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Visits label sequences of the k-per-stroke lattice in descending total
/// log-likelihood until `accept` returns a value.
fn best_first<T>(
    lists: &[Vec<(String, f64)>],
    mut accept: impl FnMut(&[usize]) -> Option<T>,
) -> Option<(Vec<usize>, T)> {
    let total = |ranks: &[usize]| ranks.iter().zip(lists).map(|(&r, l)| l[r].1).sum::<f64>();
    let start = vec![0; lists.len()];
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(Node {
        total: total(&start),
        ranks: start.clone(),
    });
    seen.insert(start);
    while let Some(Node { ranks, .. }) = heap.pop() {
        if let Some(v) = accept(&ranks) {
            return Some((ranks, v));
        }
        for p in 0..ranks.len() {
            if ranks[p] + 1 < lists[p].len() {
                let mut next = ranks.clone();
                next[p] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Node {
                        total: total(&next),
                        ranks: next,
                    });
                }
            }
        }
    }
    None
}

/// Composition from per-stroke ranked scores. With `k = 1` only the top-1
/// sequence is tried.
pub fn recognize_scored(
    rules: &RuleSet,
    classified: &[Classification],
    k: usize,
) -> Result<RecognitionResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if classified.is_empty() {
        return Err(Error::InvalidValue("no strokes".into()));
    }
    let lists: Vec<Vec<(String, f64)>> = classified
        .iter()
        .map(|c| c.ranked.iter().take(k).cloned().collect())
        .collect();
    if lists.iter().any(Vec::is_empty) {
        return Err(Error::InvalidValue("classifier has no labels".into()));
    }
    let strokes = classified
        .iter()
        .zip(&lists)
        .map(|(c, l)| StrokeResult {
            ranked: l
                .iter()
                .map(|(label, ll)| ScoredLabel {
                    label: label.clone(),
                    log_likelihood: *ll,
                })
                .collect(),
            degenerate: c.degenerate,
        })
        .collect();
    let pick = |ranks: &[usize]| -> Vec<String> {
        ranks
            .iter()
            .zip(&lists)
            .map(|(&r, l)| l[r].0.clone())
            .collect()
    };
    let top = vec![0; lists.len()];

    let (ranks, akshara, diagnostic) = if lists.len() > MAX_AKSHARA_STROKES {
        (
            top,
            None,
            Some(format!(
                "{} strokes exceeds {MAX_AKSHARA_STROKES} strokes",
                lists.len()
            )),
        )
    } else {
        match best_first(&lists, |r| compose(rules, &pick(r))) {
            Some((ranks, comp)) => (ranks, Some(comp), None),
            None => (top, None, None),
        }
    };
    Ok(RecognitionResult {
        strokes,
        sequence: pick(&ranks),
        log_likelihoods: ranks.iter().zip(&lists).map(|(&r, l)| l[r].1).collect(),
        ranks,
        akshara,
        diagnostic,
    })
}

/// Classifies each trace and composes the result.
pub fn recognize(
    c: &StrokeClassifier,
    rules: &RuleSet,
    traces: &[InkTrace],
    k: usize,
) -> Result<RecognitionResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if traces.is_empty() {
        return Err(Error::InvalidValue("no strokes".into()));
    }
    let classified = traces
        .iter()
        .map(|t| c.classify(t))
        .collect::<Result<Vec<_>>>()?;
    recognize_scored(rules, &classified, k)
}
