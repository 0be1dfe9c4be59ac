//! Versioned JSON model files.
//!
//! ```text
//! {
//!   "format": "inkrec-hmm",
//!   "version": 1,
//!   "n_states": 7,
//!   "dim": 6,
//!   "transitions": [[0,1,0,...], ...],          // (n_states + 2) rows
//!   "states": [
//!     {"weights": [...], "means": [[...], ...], "variances": [[...], ...]},
//!     ...
//!   ]
//! }
//! ```
//!
//! Numbers are written in shortest round-trip form, so loading a saved model
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mixture::{Component, GaussianMixture};
use super::model::Hmm;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "inkrec-hmm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StateDoc {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    n_states: usize,
    dim: usize,
    transitions: Vec<Vec<f64>>,
    states: Vec<StateDoc>,
}

pub fn model_to_string(h: &Hmm) -> String {
    let doc = ModelDoc {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        n_states: h.n_states(),
        dim: h.dim(),
        transitions: h.transitions().to_vec(),
        states: h
            .states()
            .iter()
            .map(|gm| StateDoc {
                weights: gm.weights(),
                means: gm.components().iter().map(|c| c.mean.clone()).collect(),
                variances: gm.components().iter().map(|c| c.var.clone()).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model serializes")
}

pub fn model_from_str(text: &str) -> Result<Hmm> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::Model(format!("unknown format {:?}", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::Model(format!(
            "unsupported version {} (expected {MODEL_VERSION})",
            doc.version
        )));
    }
    if doc.states.len() != doc.n_states {
        return Err(Error::Model(format!(
            "n_states is {} but {} state blocks follow",
            doc.n_states,
            doc.states.len()
        )));
    }
    let mut states = Vec::with_capacity(doc.n_states);
    for (i, s) in doc.states.into_iter().enumerate() {
        if s.means.len() != s.weights.len() || s.variances.len() != s.weights.len() {
            return Err(Error::Model(format!(
                "state {}: component counts disagree",
                i + 1
            )));
        }
        if s.means
            .iter()
            .chain(&s.variances)
            .any(|v| v.len() != doc.dim)
        {
            return Err(Error::Model(format!(
                "state {}: vectors are not {}-D",
                i + 1,
                doc.dim
            )));
        }
        let comps = s
            .weights
            .into_iter()
            .zip(s.means)
            .zip(s.variances)
            .map(|((w, m), v)| Component::new(w, m, v))
            .collect();
        states.push(
            GaussianMixture::new(comps)
                .map_err(|e| Error::Model(format!("state {}: {e}", i + 1)))?,
        );
    }
    Hmm::new(doc.transitions, states)
}

pub fn save_model(h: &Hmm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(h)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Hmm> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}
