//! One HMM per stroke class, maximum-likelihood scoring, confusion-driven
//! class merging and the on-disk classifier bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{confusion_matrix_with_labels, ConfusionMatrix};
use crate::features::{extract_with, FeatureConfig, FeatureSequence};
use crate::hmm::{self, Hmm, TrainConfig};
use crate::ink::{Dataset, InkTrace};
use crate::preprocess::{preprocess_pipeline, PreprocessConfig};

pub const DEFAULT_STATES: usize = 7;
pub const DEFAULT_MERGE_THRESHOLD: f64 = 15.0;

/// Preprocessing and feature settings a classifier was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.features.validate()
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Preprocesses and extracts frames; the flag marks degenerate traces.
    pub fn featurize(&self, trace: &InkTrace) -> Result<(FeatureSequence, bool)> {
        let pre = preprocess_pipeline(trace, &self.preprocess)?;
        let feats = extract_with(pre.trace.points(), &self.features)?;
        Ok((feats, pre.degenerate))
    }
}

/// Frames tagged with the hash of the pipeline that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedFeatures {
    pub features: FeatureSequence,
    pub pipeline_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Canonical labels by descending log-likelihood; exact ties in label order.
    pub ranked: Vec<(String, f64)>,
    pub degenerate: bool,
}

impl Classification {
    pub fn best(&self) -> &str {
        &self.ranked[0].0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeClassifier {
    pub models: BTreeMap<String, Hmm>,
    /// Original label → canonical label, for merged classes only.
    pub merge_map: BTreeMap<String, String>,
    pub pipeline: PipelineConfig,
}

/// Training knobs shared by every class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTraining {
    pub n_states: usize,
    pub train: TrainConfig,
    /// Worker threads for per-class training; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for ClassifierTraining {
    fn default() -> Self {
        ClassifierTraining {
            n_states: DEFAULT_STATES,
            train: TrainConfig::default(),
            jobs: 0,
        }
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains one model per label from precomputed frames. Too-short sequences
/// are skipped; a class left with none is an error.
pub fn train_from_features(
    classes: &BTreeMap<String, Vec<FeatureSequence>>,
    opts: &ClassifierTraining,
) -> Result<BTreeMap<String, Hmm>> {
    opts.train.validate()?;
    if classes.is_empty() {
        return Err(Error::NoData);
    }
    let entries: Vec<(&String, &Vec<FeatureSequence>)> = classes.iter().collect();
    let trained: Vec<Result<(String, Hmm)>> = with_pool(opts.jobs, || {
        entries
            .par_iter()
            .map(|(label, seqs)| {
                let usable: Vec<Vec<[f64; 6]>> = seqs
                    .iter()
                    .filter(|s| s.len() >= opts.n_states)
                    .map(|s| s.frames.clone())
                    .collect();
                if usable.is_empty() {
                    return Err(Error::InadmissibleClass((*label).clone()));
                }
                if usable.len() < seqs.len() {
                    log::warn!(
                        "{label}: skipped {} sequences shorter than {} frames",
                        seqs.len() - usable.len(),
                        opts.n_states
                    );
                }
                let tm = hmm::train_model(&usable, opts.n_states, &opts.train)?;
                log::info!(
                    "{label}: trained on {} sequences, {} mixtures",
                    usable.len(),
                    tm.model.mixture_count()
                );
                Ok(((*label).clone(), tm.model))
            })
            .collect()
    })?;
    trained.into_iter().collect()
}

impl StrokeClassifier {
    /// Trains one model per stroke label of `train`.
    pub fn train_all(
        train: &Dataset,
        opts: &ClassifierTraining,
        pipeline: PipelineConfig,
    ) -> Result<Self> {
        pipeline.validate()?;
        let classes = featurize_by_label(train, &pipeline, opts.jobs, &BTreeMap::new())?;
        Ok(StrokeClassifier {
            models: train_from_features(&classes, opts)?,
            merge_map: BTreeMap::new(),
            pipeline,
        })
    }

    pub fn canonical<'a>(&'a self, label: &'a str) -> &'a str {
        self.merge_map.get(label).map_or(label, String::as_str)
    }

    /// Canonical labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.models.keys().map(|l| self.canonical(l)).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn n_states(&self) -> usize {
        self.models.values().next().map_or(0, Hmm::n_states)
    }

    pub fn classify(&self, trace: &InkTrace) -> Result<Classification> {
        let (features, degenerate) = self.pipeline.featurize(trace)?;
        Ok(Classification {
            ranked: self.score(&features),
            degenerate,
        })
    }

    /// Scores frames produced elsewhere, refusing those made under a
    /// different pipeline configuration.
    pub fn classify_features(&self, input: &TaggedFeatures) -> Result<Classification> {
        let expected = self.pipeline.hash();
        if input.pipeline_hash != expected {
            return Err(Error::ConfigMismatch {
                expected,
                found: input.pipeline_hash.clone(),
            });
        }
        Ok(Classification {
            ranked: self.score(&input.features),
            degenerate: false,
        })
    }

    fn score(&self, features: &FeatureSequence) -> Vec<(String, f64)> {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for (label, model) in &self.models {
            let ll = hmm::log_forward(model, &features.frames);
            let ll = if ll.is_nan() { f64::NEG_INFINITY } else { ll };
            let slot = best
                .entry(self.canonical(label))
                .or_insert(f64::NEG_INFINITY);
            if ll > *slot {
                *slot = ll;
            }
        }
        let mut ranked: Vec<(String, f64)> =
            best.into_iter().map(|(l, s)| (l.to_owned(), s)).collect();
        // Stable sort keeps label order among exact ties.
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
    }

    /// Applies a merge map without retraining: merged classes report the
    /// canonical label with the best member score.
    pub fn with_merge_map(mut self, merge_map: BTreeMap<String, String>) -> Result<Self> {
        for target in merge_map.values() {
            if !self.models.contains_key(target) {
                return Err(Error::UnknownLabel(target.clone()));
            }
        }
        self.merge_map = merge_map;
        Ok(self)
    }

    /// Retrains each merged class as one model on the pooled samples of its
    /// members; unmerged models are kept as they are.
    pub fn retrain_merged(
        &self,
        train: &Dataset,
        merge_map: &BTreeMap<String, String>,
        opts: &ClassifierTraining,
    ) -> Result<Self> {
        let targets: BTreeSet<&String> = merge_map.values().collect();
        let pooled = featurize_by_label(train, &self.pipeline, opts.jobs, merge_map)?;
        let to_train: BTreeMap<String, Vec<FeatureSequence>> = pooled
            .into_iter()
            .filter(|(l, _)| targets.contains(l))
            .collect();
        let mut models: BTreeMap<String, Hmm> = self
            .models
            .iter()
            .filter(|(l, _)| !merge_map.contains_key(*l) && !targets.contains(l))
            .map(|(l, m)| (l.clone(), m.clone()))
            .collect();
        if !to_train.is_empty() {
            models.extend(train_from_features(&to_train, opts)?);
        }
        let mut merged = self.merge_map.clone();
        merged.extend(merge_map.iter().map(|(a, b)| (a.clone(), b.clone())));
        Ok(StrokeClassifier {
            models,
            merge_map: merged,
            pipeline: self.pipeline,
        })
    }

    /// Confusion matrix and accuracy over the stroke samples of `test`.
    pub fn evaluate(&self, test: &Dataset) -> Result<Evaluation> {
        let labels = self.labels();
        let samples: Vec<_> = test.strokes().collect();
        let mut truths = Vec::with_capacity(samples.len());
        for s in &samples {
            let canon = self.canonical(&s.label).to_owned();
            if !labels.contains(&canon) {
                return Err(Error::UnknownLabel(s.label.clone()));
            }
            truths.push(canon);
        }
        let predictions: Vec<String> = samples
            .par_iter()
            .map(|s| self.classify(&s.trace).map(|c| c.best().to_owned()))
            .collect::<Result<_>>()?;
        let matrix = confusion_matrix_with_labels(&labels, &truths, &predictions)?;
        Ok(Evaluation {
            accuracy: matrix.accuracy(),
            matrix,
            truths,
            predictions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub truths: Vec<String>,
    pub predictions: Vec<String>,
}

fn featurize_by_label(
    ds: &Dataset,
    pipeline: &PipelineConfig,
    jobs: usize,
    relabel: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, Vec<FeatureSequence>>> {
    let samples: Vec<_> = ds.strokes().collect();
    let feats: Vec<FeatureSequence> = with_pool(jobs, || {
        samples
            .par_iter()
            .map(|s| pipeline.featurize(&s.trace).map(|(f, _)| f))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut classes: BTreeMap<String, Vec<FeatureSequence>> = BTreeMap::new();
    for (s, f) in samples.iter().zip(feats) {
        let label = relabel.get(&s.label).unwrap_or(&s.label);
        classes.entry(label.clone()).or_default().push(f);
    }
    Ok(classes)
}

/// Groups classes whose symmetric confusion `rate[i][j] + rate[j][i]`
/// reaches `threshold` percent, closed under transitivity. Each group maps
/// onto its lexicographically smallest member; singletons are omitted.
pub fn merge_classes(cm: &ConfusionMatrix, threshold: f64) -> Result<BTreeMap<String, String>> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!(
            "merge threshold must be positive, got {threshold}"
        )));
    }
    let n = cm.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if cm.rates[i][j] + cm.rates[j][i] >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(&cm.labels[i]);
    }
    let mut map = BTreeMap::new();
    for members in groups.values().filter(|m| m.len() > 1) {
        let canon = members.iter().min().expect("non-empty group");
        for m in members {
            if m != canon {
                map.insert((*m).clone(), (*canon).clone());
            }
        }
    }
    Ok(map)
}

/// Accuracy of existing predictions once both sides go through a merge map.
pub fn merged_accuracy(
    truths: &[String],
    predictions: &[String],
    merge_map: &BTreeMap<String, String>,
) -> f64 {
    if truths.is_empty() {
        return 0.0;
    }
    let canon = |l: &String| merge_map.get(l).unwrap_or(l).clone();
    let correct = truths
        .iter()
        .zip(predictions)
        .filter(|(t, p)| canon(t) == canon(p))
        .count();
    100.0 * correct as f64 / truths.len() as f64
}

pub const BUNDLE_FORMAT: &str = "inkrec-bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub label: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub labels: Vec<String>,
    pub n_states: usize,
    pub pipeline_hash: String,
    pub config_sha256: String,
    pub merge_map_sha256: String,
    pub models: Vec<ModelEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

fn read_checked(path: &Path, expected: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let got = sha256_hex(&bytes);
    if got != expected {
        return Err(Error::Model(format!(
            "{}: content hash {got} does not match manifest",
            path.display()
        )));
    }
    Ok(bytes)
}

/// A classifier read back from disk together with its manifest.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub classifier: StrokeClassifier,
    pub manifest: BundleManifest,
    /// SHA-256 of `manifest.json` as stored.
    pub manifest_sha256: String,
}

impl StrokeClassifier {
    /// Writes `manifest.json`, `config.json`, `merge_map.json` and one
    /// model file per class under `models/`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<String> {
        let dir = dir.as_ref();
        let models_dir = dir.join("models");
        fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
        let config_sha256 = write_file(
            &dir.join("config.json"),
            &serde_json::to_vec_pretty(&self.pipeline)?,
        )?;
        let merge_map_sha256 = write_file(
            &dir.join("merge_map.json"),
            &serde_json::to_vec_pretty(&self.merge_map)?,
        )?;
        let mut models = Vec::new();
        for (i, (label, model)) in self.models.iter().enumerate() {
            let file = format!("models/{i:04}.json");
            let sha256 = write_file(&dir.join(&file), hmm::model_to_string(model).as_bytes())?;
            models.push(ModelEntry {
                label: label.clone(),
                file,
                sha256,
            });
        }
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            labels: self.labels(),
            n_states: self.n_states(),
            pipeline_hash: self.pipeline.hash(),
            config_sha256,
            merge_map_sha256,
            models,
        };
        write_file(
            &dir.join("manifest.json"),
            &serde_json::to_vec_pretty(&manifest)?,
        )
    }

    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<LoadedBundle> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let manifest_bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: BundleManifest = serde_json::from_slice(&manifest_bytes)?;
        if manifest.format != BUNDLE_FORMAT || manifest.version != BUNDLE_VERSION {
            return Err(Error::Model(format!(
                "unsupported bundle {} v{}",
                manifest.format, manifest.version
            )));
        }
        let pipeline: PipelineConfig = serde_json::from_slice(&read_checked(
            &dir.join("config.json"),
            &manifest.config_sha256,
        )?)?;
        if pipeline.hash() != manifest.pipeline_hash {
            return Err(Error::ConfigMismatch {
                expected: manifest.pipeline_hash.clone(),
                found: pipeline.hash(),
            });
        }
        let merge_map: BTreeMap<String, String> = serde_json::from_slice(&read_checked(
            &dir.join("merge_map.json"),
            &manifest.merge_map_sha256,
        )?)?;
        let mut models = BTreeMap::new();
        for entry in &manifest.models {
            let bytes = read_checked(&dir.join(&entry.file), &entry.sha256)?;
            let text = String::from_utf8(bytes).map_err(|e| Error::Model(e.to_string()))?;
            models.insert(entry.label.clone(), hmm::model_from_str(&text)?);
        }
        let classifier = StrokeClassifier {
            models,
            merge_map: BTreeMap::new(),
            pipeline,
        }
        .with_merge_map(merge_map)?;
        Ok(LoadedBundle {
            classifier,
            manifest,
            manifest_sha256: sha256_hex(&manifest_bytes),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::GaussianMixture;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn published_block() -> ConfusionMatrix {
        // First row and the st4 row of the published 10-class block,
        // restricted to the st1/st4 pair and padded with a third class.
        ConfusionMatrix::from_rates(
            labels(&["st1", "st4", "st9"]),
            vec![
                vec![69.68, 8.30, 0.75],
                vec![0.15, 94.93, 0.77],
                vec![0.0, 0.0, 98.31],
            ],
        )
        .unwrap()
    }

    #[test]
    fn merge_threshold_ten_keeps_pair_apart() {
        assert!(merge_classes(&published_block(), 10.0).unwrap().is_empty());
    }

    #[test]
    fn merge_threshold_eight_joins_pair() {
        let map = merge_classes(&published_block(), 8.0).unwrap();
        assert_eq!(
            map,
            BTreeMap::from([("st4".to_string(), "st1".to_string())])
        );
    }

    #[test]
    fn merge_is_transitive() {
        let cm = ConfusionMatrix::from_rates(
            labels(&["c", "b", "a"]),
            vec![
                vec![80.0, 20.0, 0.0],
                vec![0.0, 80.0, 20.0],
                vec![0.0, 0.0, 100.0],
            ],
        )
        .unwrap();
        let map = merge_classes(&cm, 15.0).unwrap();
        assert_eq!(map.get("b").map(String::as_str), Some("a"));
        assert_eq!(map.get("c").map(String::as_str), Some("a"));
        assert!(!map.contains_key("a"));
    }

    #[test]
    fn identity_matrix_no_merge() {
        let cm = ConfusionMatrix::from_rates(
            labels(&["a", "b"]),
            vec![vec![100.0, 0.0], vec![0.0, 100.0]],
        )
        .unwrap();
        assert!(merge_classes(&cm, 15.0).unwrap().is_empty());
        assert!(merge_classes(&cm, 0.0).is_err());
    }

    #[test]
    fn identical_models_tie_in_label_order() {
        let m = Hmm::from_self_loops(
            &[0.5; 2],
            vec![GaussianMixture::single(vec![0.5; 6], vec![0.1; 6]); 2],
        )
        .unwrap();
        let c = StrokeClassifier {
            models: ["zeta", "alpha", "mid"]
                .iter()
                .map(|l| (l.to_string(), m.clone()))
                .collect(),
            merge_map: BTreeMap::new(),
            pipeline: PipelineConfig::default(),
        };
        let trace = InkTrace::from_xy(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let out = c.classify(&trace).unwrap();
        let order: Vec<&str> = out.ranked.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(order, vec!["alpha", "mid", "zeta"]);
        assert!(out.ranked.windows(2).all(|w| w[0].1 == w[1].1));
    }

    #[test]
    fn merge_map_collapses_scores() {
        let m = Hmm::from_self_loops(
            &[0.5; 2],
            vec![GaussianMixture::single(vec![0.5; 6], vec![0.1; 6]); 2],
        )
        .unwrap();
        let c = StrokeClassifier {
            models: ["a", "b", "c"]
                .iter()
                .map(|l| (l.to_string(), m.clone()))
                .collect(),
            merge_map: BTreeMap::new(),
            pipeline: PipelineConfig::default(),
        }
        .with_merge_map(BTreeMap::from([("b".to_string(), "a".to_string())]))
        .unwrap();
        assert_eq!(c.labels(), labels(&["a", "c"]));
        let out = c
            .classify(&InkTrace::from_xy(&[(0.0, 0.0), (1.0, 0.0)]).unwrap())
            .unwrap();
        assert_eq!(out.ranked.len(), 2);
    }

    #[test]
    fn pipeline_hash_mismatch_refused() {
        let m = Hmm::from_self_loops(
            &[0.5],
            vec![GaussianMixture::single(vec![0.5; 6], vec![0.1; 6])],
        )
        .unwrap();
        let c = StrokeClassifier {
            models: BTreeMap::from([("a".to_string(), m)]),
            merge_map: BTreeMap::new(),
            pipeline: PipelineConfig::default(),
        };
        let other = PipelineConfig {
            preprocess: PreprocessConfig {
                resample_count: 32,
                ..Default::default()
            },
            ..Default::default()
        };
        let trace = InkTrace::from_xy(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let (features, _) = other.featurize(&trace).unwrap();
        let tagged = TaggedFeatures {
            features,
            pipeline_hash: other.hash(),
        };
        assert!(matches!(
            c.classify_features(&tagged),
            Err(Error::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn merged_accuracy_never_drops() {
        let t = labels(&["a", "b", "b", "c"]);
        let p = labels(&["b", "b", "a", "c"]);
        let before = merged_accuracy(&t, &p, &BTreeMap::new());
        let after = merged_accuracy(
            &t,
            &p,
            &BTreeMap::from([("b".to_string(), "a".to_string())]),
        );
        assert_eq!(before, 50.0);
        assert_eq!(after, 100.0);
    }
}
