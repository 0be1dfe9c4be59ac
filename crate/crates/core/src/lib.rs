//! Online handwritten stroke recognition with per-class left-to-right
//! GMM-HMMs, and akshara composition from recognized stroke labels through
//! exact-match language rules.
//!
//! The pipeline runs raw ink through [`preprocess`] and [`features`], scores
//! the frames against every class model of a [`classifier::StrokeClassifier`]
//! and composes the winning labels with a [`rules::RuleSet`]
//! ([`recognizer::recognize`]). [`synth`] generates labelled data and
//! [`service`] exposes recognition over HTTP.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod ink;
pub mod preprocess;
pub mod recognizer;
pub mod rules;
pub mod service;
pub mod synth;

pub use error::{Error, Result};
