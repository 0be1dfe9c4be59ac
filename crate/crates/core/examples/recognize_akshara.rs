//! End to end: train stroke models, derive rules from annotated aksharas,
//! and recognize unseen aksharas with and without the k-best lattice.

use std::collections::BTreeSet;

use inkrec::classifier::{ClassifierTraining, PipelineConfig, StrokeClassifier};
use inkrec::hmm::TrainConfig;
use inkrec::ink::split_by_session;
use inkrec::recognizer::recognize;
use inkrec::rules::{alternatives_from_confusion, build_rules, expand_rules};
use inkrec::synth;

fn main() -> inkrec::Result<()> {
    let specs: Vec<_> = synth::catalog(10)
        .into_iter()
        .map(|s| s.noise(0.05).writer_variation(0.2))
        .collect();
    let strokes = synth::generate_all(&specs, 4, 10, 2, 1)?;
    let (train, test) = split_by_session(&strokes, &BTreeSet::from([1]))?;
    let opts = ClassifierTraining {
        train: TrainConfig {
            target_mixtures: 4,
            ..TrainConfig::default()
        },
        ..ClassifierTraining::default()
    };
    let classifier = StrokeClassifier::train_all(&train, &opts, PipelineConfig::default())?;
    let eval = classifier.evaluate(&test)?;
    println!("stroke accuracy {:.2}%", eval.accuracy);

    let aksharas = synth::generate_aksharas(&specs, &synth::akshara_catalog(), 2, 10, 2, 2)?;
    let (annotated, unseen) = split_by_session(&aksharas, &BTreeSet::from([1]))?;
    let (samples, labels): (Vec<_>, Vec<_>) = annotated
        .aksharas()
        .map(|a| (a.clone(), a.stroke_labels.clone().unwrap_or_default()))
        .unzip();
    let base = build_rules(&samples, &labels, 5.0)?;
    let refined = expand_rules(&base, &alternatives_from_confusion(&eval.matrix, 5.0), 5.0)?;
    println!("{} base rules, {} refined", base.len(), refined.len());

    for k in [1, 3] {
        for (name, rules) in [("base", &base), ("refined", &refined)] {
            let mut correct = 0;
            let items: Vec<_> = unseen.aksharas().collect();
            for a in &items {
                let r = recognize(&classifier, rules, &a.traces, k)?;
                correct += r.akshara.is_some_and(|c| c.akshara == a.label) as usize;
            }
            println!("k={k} {name:<8} {correct}/{} aksharas", items.len());
        }
    }

    let first = unseen.aksharas().next().expect("test aksharas");
    let r = recognize(&classifier, &refined, &first.traces, 1)?;
    println!("{}", r.to_json());
    Ok(())
}
