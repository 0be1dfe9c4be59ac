//! Language rules: exact-match tables from stroke-label sequences to
//! aksharas, their confusion-expanded ("refined") form, and composition.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::ink::{AksharaSample, MAX_AKSHARA_STROKES};

pub const DEFAULT_WRITER_THRESHOLD: f64 = 5.0;
pub const DEFAULT_RATE_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleSetKind {
    Base,
    Refined,
}

/// How a refined rule was derived from a base rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base: Vec<String>,
    /// `(position, original, substitute)` for every swapped stroke.
    pub substitutions: Vec<(usize, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub sequence: Vec<String>,
    pub akshara: String,
    pub unicode: String,
    /// Fraction of writers of this akshara who used the combination.
    pub support: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Rule tables indexed by sequence length 1..=8.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    kind: RuleSetKind,
    tables: Vec<BTreeMap<Vec<String>, Rule>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Composition {
    pub akshara: String,
    pub unicode: String,
}

fn valid_length(len: usize) -> bool {
    (1..=MAX_AKSHARA_STROKES).contains(&len)
}

impl RuleSet {
    pub fn new(kind: RuleSetKind) -> Self {
        RuleSet {
            kind,
            tables: vec![BTreeMap::new(); MAX_AKSHARA_STROKES],
        }
    }

    pub fn kind(&self) -> RuleSetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.tables.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rules of one stroke count, in sequence order.
    pub fn rules_of_length(&self, len: usize) -> impl Iterator<Item = &Rule> {
        self.tables
            .get(len.wrapping_sub(1))
            .into_iter()
            .flat_map(BTreeMap::values)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.tables.iter().flat_map(BTreeMap::values)
    }

    pub fn get(&self, sequence: &[String]) -> Option<&Rule> {
        if !valid_length(sequence.len()) {
            return None;
        }
        self.tables[sequence.len() - 1].get(sequence)
    }

    /// Inserts unless the sequence is taken. Returns the akshara already
    /// holding the sequence when it differs from the new rule's.
    pub fn insert(&mut self, rule: Rule) -> Result<Option<String>> {
        let len = rule.sequence.len();
        if !valid_length(len) {
            return Err(Error::InvalidValue(format!(
                "rule for {} has {len} strokes; 1 to {MAX_AKSHARA_STROKES} allowed",
                rule.akshara
            )));
        }
        if !(rule.support > 0.0 && rule.support <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "rule support {} outside (0, 1]",
                rule.support
            )));
        }
        match self.tables[len - 1].get(&rule.sequence) {
            Some(existing) if existing.akshara != rule.akshara => {
                Ok(Some(existing.akshara.clone()))
            }
            Some(_) => Ok(None),
            None => {
                self.tables[len - 1].insert(rule.sequence.clone(), rule);
                Ok(None)
            }
        }
    }
}

/// Exact lookup of the recognized label sequence.
pub fn compose(rules: &RuleSet, recognized: &[String]) -> Option<Composition> {
    if recognized.len() > MAX_AKSHARA_STROKES {
        log::warn!(
            "{} strokes exceed the {MAX_AKSHARA_STROKES}-stroke limit",
            recognized.len()
        );
        return None;
    }
    rules.get(recognized).map(|r| Composition {
        akshara: r.akshara.clone(),
        unicode: r.unicode.clone(),
    })
}

/// Keeps, per akshara, every stroke-label sequence used by strictly more
/// than `writer_threshold` percent of the distinct writers of that akshara.
pub fn build_rules(
    samples: &[AksharaSample],
    stroke_labels: &[Vec<String>],
    writer_threshold: f64,
) -> Result<RuleSet> {
    if samples.len() != stroke_labels.len() {
        return Err(Error::LengthMismatch(samples.len(), stroke_labels.len()));
    }
    if !(0.0..100.0).contains(&writer_threshold) {
        return Err(Error::Config(format!(
            "writer threshold {writer_threshold} outside [0, 100)"
        )));
    }
    struct Entry<'a> {
        unicode: &'a str,
        writers: BTreeSet<&'a str>,
        combos: BTreeMap<&'a [String], BTreeSet<&'a str>>,
    }
    let mut by_akshara: BTreeMap<&str, Entry> = BTreeMap::new();
    for (sample, labels) in samples.iter().zip(stroke_labels) {
        let entry = by_akshara.entry(&sample.label).or_insert_with(|| Entry {
            unicode: &sample.unicode,
            writers: BTreeSet::new(),
            combos: BTreeMap::new(),
        });
        entry.writers.insert(&sample.writer);
        if !valid_length(labels.len()) {
            log::warn!(
                "{} by {}: {} strokes outside 1..={MAX_AKSHARA_STROKES}, skipped",
                sample.label,
                sample.writer,
                labels.len()
            );
            continue;
        }
        entry
            .combos
            .entry(labels.as_slice())
            .or_default()
            .insert(&sample.writer);
    }

    // Candidates ordered by support (desc) so collisions go to the better
    // supported akshara; exact ties fall back to akshara then sequence order.
    let mut candidates = Vec::new();
    for (akshara, entry) in &by_akshara {
        let total = entry.writers.len() as f64;
        for (seq, writers) in &entry.combos {
            let support = writers.len() as f64 / total;
            if 100.0 * support > writer_threshold {
                candidates.push(Rule {
                    sequence: seq.to_vec(),
                    akshara: (*akshara).to_owned(),
                    unicode: entry.unicode.to_owned(),
                    support,
                    provenance: None,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then_with(|| a.akshara.cmp(&b.akshara))
            .then_with(|| a.sequence.cmp(&b.sequence))
    });
    let mut set = RuleSet::new(RuleSetKind::Base);
    for rule in candidates {
        let (seq, ak) = (rule.sequence.clone(), rule.akshara.clone());
        if let Some(owner) = set.insert(rule)? {
            log::warn!("sequence {seq:?} already maps to {owner}; dropped for {ak}");
        }
    }
    Ok(set)
}

/// Stroke label → alternatives it is confused with, with their rates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionAlternatives {
    pub alternatives: BTreeMap<String, Vec<(String, f64)>>,
}

impl ConfusionAlternatives {
    pub fn insert(&mut self, label: &str, alternative: &str, rate: f64) -> Result<()> {
        if label == alternative {
            return Err(Error::InvalidValue(format!(
                "{label} cannot be its own alternative"
            )));
        }
        if !(0.0..=100.0).contains(&rate) {
            return Err(Error::InvalidValue(format!(
                "confusion rate {rate} outside [0, 100]"
            )));
        }
        let alts = self.alternatives.entry(label.to_owned()).or_default();
        alts.retain(|(a, _)| a != alternative);
        alts.push((alternative.to_owned(), rate));
        alts.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(())
    }

    /// Alternatives of `label` at or above `rate_threshold`, in label order.
    pub fn above(&self, label: &str, rate_threshold: f64) -> Vec<&str> {
        self.alternatives
            .get(label)
            .map(|alts| {
                alts.iter()
                    .filter(|(_, r)| *r >= rate_threshold)
                    .map(|(a, _)| a.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.alternatives.values().all(Vec::is_empty)
    }
}

/// `j` is an alternative of `i` iff `rate[i][j] >= rate_threshold`, `i ≠ j`.
pub fn alternatives_from_confusion(
    cm: &ConfusionMatrix,
    rate_threshold: f64,
) -> ConfusionAlternatives {
    let mut alts = ConfusionAlternatives::default();
    for (i, truth) in cm.labels.iter().enumerate() {
        if cm.empty_rows.contains(truth) {
            continue;
        }
        for (j, pred) in cm.labels.iter().enumerate() {
            if i != j && cm.rates[i][j] >= rate_threshold && cm.rates[i][j] > 0.0 {
                alts.insert(truth, pred, cm.rates[i][j])
                    .expect("valid confusion entry");
            }
        }
    }
    alts
}

/// Every sequence obtained by replacing any subset of positions with one of
/// that position's alternatives, the original sequence first.
pub fn expansions(
    sequence: &[String],
    alts: &ConfusionAlternatives,
    rate_threshold: f64,
) -> Vec<(Vec<String>, Provenance)> {
    let options: Vec<Vec<&str>> = sequence
        .iter()
        .map(|l| {
            let mut o = vec![l.as_str()];
            o.extend(
                alts.above(l, rate_threshold)
                    .into_iter()
                    .filter(|a| *a != l),
            );
            o
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; sequence.len()];
    loop {
        let seq: Vec<String> = idx
            .iter()
            .zip(&options)
            .map(|(&k, o)| o[k].to_owned())
            .collect();
        let substitutions = idx
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(p, &k)| (p, sequence[p].clone(), options[p][k].to_owned()))
            .collect();
        out.push((
            seq,
            Provenance {
                base: sequence.to_vec(),
                substitutions,
            },
        ));
        // Odometer increment, last position fastest.
        let mut p = sequence.len();
        loop {
            if p == 0 {
                return out;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < options[p].len() {
                break;
            }
            idx[p] = 0;
        }
    }
}

/// Adds every confusion-substituted variant of each base rule. Base rules
/// always win a collision; among expansions the first registered wins.
pub fn expand_rules(
    base: &RuleSet,
    alts: &ConfusionAlternatives,
    rate_threshold: f64,
) -> Result<RuleSet> {
    let mut refined = RuleSet::new(RuleSetKind::Refined);
    for rule in base.rules() {
        refined.insert(rule.clone())?;
    }
    for rule in base.rules() {
        for (seq, prov) in expansions(&rule.sequence, alts, rate_threshold)
            .into_iter()
            .skip(1)
        {
            let expanded = Rule {
                sequence: seq.clone(),
                akshara: rule.akshara.clone(),
                unicode: rule.unicode.clone(),
                support: rule.support,
                provenance: Some(prov),
            };
            if let Some(owner) = refined.insert(expanded)? {
                log::info!(
                    "expanded sequence {seq:?} for {} collides with {owner}; kept {owner}",
                    rule.akshara
                );
            }
        }
    }
    Ok(refined)
}

pub const RULES_FORMAT: &str = "inkrec-rules";
pub const RULES_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct RulesDoc {
    format: String,
    version: u32,
    kind: RuleSetKind,
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn to_json(&self) -> String {
        let doc = RulesDoc {
            format: RULES_FORMAT.into(),
            version: RULES_VERSION,
            kind: self.kind,
            rules: self.rules().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("rules serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RulesDoc = serde_json::from_str(text)?;
        if doc.format != RULES_FORMAT || doc.version != RULES_VERSION {
            return Err(Error::InvalidValue(format!(
                "unsupported rule file {} v{}",
                doc.format, doc.version
            )));
        }
        let mut set = RuleSet::new(doc.kind);
        for rule in doc.rules {
            let seq = rule.sequence.clone();
            if let Some(owner) = set.insert(rule)? {
                return Err(Error::InvalidValue(format!(
                    "sequence {seq:?} is claimed by {owner} and another akshara"
                )));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::InkTrace;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn sample(akshara: &str, writer: &str, strokes: usize) -> AksharaSample {
        AksharaSample {
            traces: vec![InkTrace::from_xy(&[(0.0, 0.0)]).unwrap(); strokes],
            label: akshara.into(),
            unicode: "আ".into(),
            writer: writer.into(),
            session: 1,
            stroke_labels: None,
        }
    }

    fn figure_eight() -> (RuleSet, ConfusionAlternatives) {
        let mut base = RuleSet::new(RuleSetKind::Base);
        base.insert(Rule {
            sequence: s(&["st1", "st2", "st3"]),
            akshara: "ak1".into(),
            unicode: "আ".into(),
            support: 1.0,
            provenance: None,
        })
        .unwrap();
        let mut alts = ConfusionAlternatives::default();
        for a in ["st4", "st61", "st32"] {
            alts.insert("st1", a, 10.0).unwrap();
        }
        alts.insert("st2", "st144", 10.0).unwrap();
        (base, alts)
    }

    #[test]
    fn writer_threshold_is_strict() {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for w in 0..20 {
            samples.push(sample("ak1", &format!("w{w:02}"), 3));
            labels.push(match w {
                0 => s(&["st9", "st2", "st3"]),
                1 | 2 => s(&["st1", "st7", "st3"]),
                _ => s(&["st1", "st2", "st3"]),
            });
        }
        let rules = build_rules(&samples, &labels, 5.0).unwrap();
        assert!(rules.get(&s(&["st9", "st2", "st3"])).is_none());
        let kept = rules.get(&s(&["st1", "st7", "st3"])).unwrap();
        assert!((kept.support - 0.1).abs() < 1e-12);
        assert!(rules.get(&s(&["st1", "st2", "st3"])).is_some());
    }

    #[test]
    fn single_writer_kept() {
        let rules = build_rules(&[sample("ak", "w", 1)], &[s(&["st5"])], 5.0).unwrap();
        assert_eq!(rules.get(&s(&["st5"])).unwrap().support, 1.0);
    }

    #[test]
    fn multi_length_variants() {
        let samples = vec![sample("ak2", "a", 2), sample("ak2", "b", 3)];
        let labels = vec![s(&["st7", "st1"]), s(&["st7", "st7", "st1"])];
        let rules = build_rules(&samples, &labels, 5.0).unwrap();
        assert_eq!(rules.rules_of_length(2).count(), 1);
        assert_eq!(rules.rules_of_length(3).count(), 1);
    }

    #[test]
    fn overlong_sample_skipped() {
        let samples = vec![sample("ak", "a", 8)];
        let labels = vec![s(&["x"; 9])];
        assert!(build_rules(&samples, &labels, 5.0).unwrap().is_empty());
    }

    #[test]
    fn published_expansion() {
        let (base, alts) = figure_eight();
        let refined = expand_rules(&base, &alts, 5.0).unwrap();
        assert_eq!(refined.kind(), RuleSetKind::Refined);
        assert_eq!(refined.len(), 8);
        for seq in [
            ["st1", "st144", "st3"],
            ["st4", "st2", "st3"],
            ["st61", "st2", "st3"],
            ["st4", "st144", "st3"],
        ] {
            let c = compose(&refined, &s(&seq)).unwrap();
            assert_eq!(c.akshara, "ak1");
        }
        assert!(compose(&refined, &s(&["st1", "st2"])).is_none());
    }

    #[test]
    fn empty_alternatives_identity() {
        let (base, _) = figure_eight();
        let refined = expand_rules(&base, &ConfusionAlternatives::default(), 5.0).unwrap();
        assert_eq!(
            refined.rules().collect::<Vec<_>>(),
            base.rules().collect::<Vec<_>>()
        );
    }

    #[test]
    fn base_wins_collision() {
        let (mut base, alts) = figure_eight();
        base.insert(Rule {
            sequence: s(&["st4", "st2", "st3"]),
            akshara: "ak9".into(),
            unicode: "x".into(),
            support: 0.5,
            provenance: None,
        })
        .unwrap();
        let refined = expand_rules(&base, &alts, 5.0).unwrap();
        assert_eq!(
            compose(&refined, &s(&["st4", "st2", "st3"]))
                .unwrap()
                .akshara,
            "ak9"
        );
        assert_eq!(
            compose(&refined, &s(&["st1", "st2", "st3"]))
                .unwrap()
                .akshara,
            "ak1"
        );
    }

    #[test]
    fn published_row_alternatives() {
        let cm = ConfusionMatrix::from_rates(
            s(&["st1", "st4", "st6"]),
            vec![
                vec![69.68, 8.30, 1.21],
                vec![0.15, 94.93, 0.31],
                vec![0.24, 0.0, 86.03],
            ],
        )
        .unwrap();
        assert_eq!(
            alternatives_from_confusion(&cm, 5.0).above("st1", 5.0),
            vec!["st4"]
        );
        assert!(alternatives_from_confusion(&cm, 10.0)
            .above("st1", 10.0)
            .is_empty());

        let ident =
            ConfusionMatrix::from_rates(s(&["a", "b"]), vec![vec![100.0, 0.0], vec![0.0, 100.0]])
                .unwrap();
        assert!(alternatives_from_confusion(&ident, 0.0).is_empty());
    }

    #[test]
    fn long_input_composes_to_nothing() {
        let (base, _) = figure_eight();
        assert!(compose(&base, &s(&["st1"; 9])).is_none());
    }

    #[test]
    fn rule_file_round_trip() {
        let (base, alts) = figure_eight();
        let refined = expand_rules(&base, &alts, 5.0).unwrap();
        let back = RuleSet::from_json(&refined.to_json()).unwrap();
        assert_eq!(back, refined);
        let with_prov = back.get(&s(&["st4", "st144", "st3"])).unwrap();
        assert_eq!(
            with_prov.provenance.as_ref().unwrap().substitutions.len(),
            2
        );
    }

    #[test]
    fn own_alternative_rejected() {
        let mut alts = ConfusionAlternatives::default();
        assert!(alts.insert("a", "a", 10.0).is_err());
        assert!(alts.insert("a", "b", 101.0).is_err());
    }
}
