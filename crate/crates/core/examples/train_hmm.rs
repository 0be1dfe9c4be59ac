//! Fits a left-to-right GMM-HMM to samples drawn from a known model and
//! prints the likelihood after every Baum-Welch stage.

use inkrec::hmm::{log_forward, train_model, Component, GaussianMixture, Hmm, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> inkrec::Result<()> {
    let state = |mx: f64, my: f64| GaussianMixture::single(vec![mx, my], vec![0.05, 0.05]);
    let bimodal = GaussianMixture::new(vec![
        Component::new(0.5, vec![1.0, 1.0], vec![0.02, 0.02]),
        Component::new(0.5, vec![1.5, 0.5], vec![0.02, 0.02]),
    ])?;
    let truth = Hmm::from_self_loops(
        &[0.7, 0.6, 0.8],
        vec![state(0.0, 0.0), state(0.5, 1.0), bimodal],
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<Vec<Vec<f64>>> = (0..200).map(|_| truth.sample(&mut rng)).collect();
    let frames: usize = data.iter().map(Vec::len).sum();

    let cfg = TrainConfig {
        target_mixtures: 2,
        ..TrainConfig::default()
    };
    let trained = train_model(&data, 3, &cfg)?;
    for (mixtures, trace) in &trained.stages {
        println!(
            "{mixtures} mixture(s): {} iterations, log-likelihood/frame {:.4} → {:.4}",
            trace.len() - 1,
            trace[0] / frames as f64,
            trace.last().unwrap() / frames as f64
        );
    }

    let score = |h: &Hmm| data.iter().map(|o| log_forward(h, o)).sum::<f64>() / frames as f64;
    println!("generating model: {:.4} per frame", score(&truth));
    println!("trained model:    {:.4} per frame", score(&trained.model));
    for i in 0..3 {
        println!(
            "state {}: self-loop {:.3}",
            i + 1,
            trained.model.self_loop(i)
        );
    }
    Ok(())
}
