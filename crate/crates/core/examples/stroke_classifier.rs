//! Trains one HMM per synthetic stroke class, evaluates on a held-out
//! session and merges classes that are confused too often.

use std::collections::BTreeSet;

use inkrec::classifier::{
    merge_classes, merged_accuracy, ClassifierTraining, PipelineConfig, StrokeClassifier,
};
use inkrec::hmm::TrainConfig;
use inkrec::ink::split_by_session;
use inkrec::synth;

fn main() -> inkrec::Result<()> {
    // Noisy ink with strong writer variation, so some classes overlap.
    let specs: Vec<_> = synth::catalog(10)
        .into_iter()
        .map(|s| s.noise(0.06).writer_variation(0.25))
        .collect();
    let ds = synth::generate_all(&specs, 4, 10, 2, 7)?;
    let (train, test) = split_by_session(&ds, &BTreeSet::from([1]))?;

    let opts = ClassifierTraining {
        n_states: 7,
        train: TrainConfig {
            target_mixtures: 4,
            ..TrainConfig::default()
        },
        jobs: 0,
    };
    let classifier = StrokeClassifier::train_all(&train, &opts, PipelineConfig::default())?;
    let eval = classifier.evaluate(&test)?;
    print!("{}", eval.matrix.to_text());

    let merge = merge_classes(&eval.matrix, 10.0)?;
    if merge.is_empty() {
        println!("no pair of classes is confused at 10% or more");
        return Ok(());
    }
    for (from, to) in &merge {
        println!("merge {from} → {to}");
    }
    println!(
        "accuracy counting merged classes as one: {:.2}%",
        merged_accuracy(&eval.truths, &eval.predictions, &merge)
    );
    let retrained = classifier.retrain_merged(&train, &merge, &opts)?;
    println!(
        "retrained on pooled samples: {} models, accuracy {:.2}%",
        retrained.models.len(),
        retrained.evaluate(&test)?.accuracy
    );
    Ok(())
}
