//! Confusion matrices and evaluation reports.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-normalized confusion matrix. `rates[i][j]` is the percentage of
/// class `labels[i]` samples predicted as `labels[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub rates: Vec<Vec<f64>>,
    /// Raw counts when the matrix was built from predictions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<Vec<usize>>>,
    /// Classes with no test samples; their rate rows are all zero.
    #[serde(default)]
    pub empty_rows: Vec<String>,
}

impl ConfusionMatrix {
    /// Builds a matrix directly from percentage rows.
    pub fn from_rates(labels: Vec<String>, rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if rates.len() != n || rates.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidValue(format!(
                "confusion rates must be {n}×{n}"
            )));
        }
        if rates.iter().flatten().any(|r| !(0.0..=100.0).contains(r)) {
            return Err(Error::InvalidValue(
                "confusion rates must lie in [0, 100]".into(),
            ));
        }
        Ok(ConfusionMatrix {
            labels,
            rates,
            counts: None,
            empty_rows: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn rate(&self, truth: &str, predicted: &str) -> Option<f64> {
        Some(self.rates[self.index_of(truth)?][self.index_of(predicted)?])
    }

    pub fn row_support(&self, i: usize) -> Option<usize> {
        self.counts.as_ref().map(|c| c[i].iter().sum())
    }

    /// Overall accuracy in percent: correct / total when counts are known,
    /// else the plain mean of the diagonal.
    pub fn accuracy(&self) -> f64 {
        match &self.counts {
            Some(counts) => {
                let total: usize = counts.iter().flatten().sum();
                let correct: usize = (0..counts.len()).map(|i| counts[i][i]).sum();
                if total == 0 {
                    0.0
                } else {
                    100.0 * correct as f64 / total as f64
                }
            }
            None if self.is_empty() => 0.0,
            None => (0..self.len()).map(|i| self.rates[i][i]).sum::<f64>() / self.len() as f64,
        }
    }

    /// Aligned text table with two-decimal percentages.
    pub fn to_text(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(6)
            + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "true\\pred");
        for l in &self.labels {
            let _ = write!(out, "{l:>width$}");
        }
        if self.counts.is_some() {
            let _ = write!(out, "{:>width$}", "n");
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            let _ = write!(out, "{l:<width$}");
            for r in &self.rates[i] {
                let _ = write!(out, "{:>width$}", format!("{r:.2}"));
            }
            if let Some(n) = self.row_support(i) {
                let _ = write!(out, "{n:>width$}");
            }
            if self.empty_rows.contains(l) {
                out.push_str("  (no samples)");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "accuracy: {:.2}%", self.accuracy());
        out
    }
}

/// Confusion matrix over the sorted union of all labels seen.
pub fn confusion_matrix(truths: &[String], predictions: &[String]) -> Result<ConfusionMatrix> {
    let labels: BTreeSet<&String> = truths.iter().chain(predictions).collect();
    let labels: Vec<String> = labels.into_iter().cloned().collect();
    confusion_matrix_with_labels(&labels, truths, predictions)
}

/// Confusion matrix over a fixed label inventory; unknown labels are errors.
pub fn confusion_matrix_with_labels(
    labels: &[String],
    truths: &[String],
    predictions: &[String],
) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return Err(Error::LengthMismatch(truths.len(), predictions.len()));
    }
    if truths.is_empty() {
        return Err(Error::InvalidValue("no samples to evaluate".into()));
    }
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let lookup = |l: &String| {
        index
            .get(l.as_str())
            .copied()
            .ok_or_else(|| Error::UnknownLabel(l.clone()))
    };
    let n = labels.len();
    let mut counts = vec![vec![0usize; n]; n];
    for (t, p) in truths.iter().zip(predictions) {
        counts[lookup(t)?][lookup(p)?] += 1;
    }
    let mut empty_rows = Vec::new();
    let rates = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                empty_rows.push(labels[i].clone());
                vec![0.0; n]
            } else {
                row.iter()
                    .map(|&c| 100.0 * c as f64 / total as f64)
                    .collect()
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        rates,
        counts: Some(counts),
        empty_rows,
    })
}
