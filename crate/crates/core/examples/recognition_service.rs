//! Trains a small bundle into a temporary directory and serves it.
//!
//!     cargo run --release --example recognition_service -- 8080
//!     curl localhost:8080/api/health
//!     curl -d '{"strokes":[[[0,0],[10,10],[20,20]]]}' localhost:8080/api/recognize

use inkrec::classifier::{ClassifierTraining, PipelineConfig, StrokeClassifier};
use inkrec::hmm::TrainConfig;
use inkrec::rules::build_rules;
use inkrec::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let port: u16 = std::env::args()
        .nth(1)
        .map(|p| p.parse())
        .transpose()?
        .unwrap_or(8080);

    let specs = synth::catalog(10);
    let opts = ClassifierTraining {
        train: TrainConfig {
            target_mixtures: 2,
            ..TrainConfig::default()
        },
        ..ClassifierTraining::default()
    };
    let classifier = StrokeClassifier::train_all(
        &synth::generate_all(&specs, 2, 10, 1, 5)?,
        &opts,
        PipelineConfig::default(),
    )?;
    let aksharas = synth::generate_aksharas(&specs, &synth::akshara_catalog(), 1, 10, 1, 6)?;
    let (samples, labels): (Vec<_>, Vec<_>) = aksharas
        .aksharas()
        .map(|a| (a.clone(), a.stroke_labels.clone().unwrap_or_default()))
        .unzip();
    let rules = build_rules(&samples, &labels, 5.0)?;

    let dir = tempfile::tempdir()?;
    classifier.save_bundle(dir.path().join("bundle"))?;
    rules.save(dir.path().join("rules.json"))?;
    // One captured request body per akshara, ready for curl -d @file.
    for a in aksharas.samples.iter().take(5) {
        let path = dir.path().join(format!("{}.json", a.label()));
        std::fs::write(
            &path,
            serde_json::to_string(&inkrec::ink::InkRecord::from_sample(a))?,
        )?;
        println!("sample payload: {}", path.display());
    }
    inkrec::service::run(
        &dir.path().join("bundle"),
        &dir.path().join("rules.json"),
        port,
    )?;
    Ok(())
}
