//! Brute-force references: enumerate every state path in the linear domain.

use inkrec::hmm::Hmm;

/// Weighted diagonal-Gaussian mixture density, computed directly.
pub fn density(h: &Hmm, state: usize, x: &[f64]) -> f64 {
    h.states()[state]
        .components()
        .iter()
        .map(|c| {
            let mut p = c.weight;
            for ((xi, m), v) in x.iter().zip(&c.mean).zip(&c.var) {
                p *= (-(xi - m) * (xi - m) / (2.0 * v)).exp()
                    / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            p
        })
        .sum()
}

/// Calls `visit(path, probability)` for every emitting-state path of length
/// T, entry and exit included in the probability.
pub fn for_each_path(h: &Hmm, obs: &[Vec<f64>], mut visit: impl FnMut(&[usize], f64)) {
    let n = h.n_states();
    let a = h.transitions();
    let t_len = obs.len();
    let mut path = vec![0usize; t_len];
    loop {
        let mut p = a[0][path[0] + 1] * density(h, path[0], &obs[0]);
        for t in 1..t_len {
            p *= a[path[t - 1] + 1][path[t] + 1] * density(h, path[t], &obs[t]);
        }
        p *= a[path[t_len - 1] + 1][n + 1];
        visit(&path, p);
        // Odometer over n^T paths.
        let mut i = t_len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
        }
    }
}

pub fn likelihood(h: &Hmm, obs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for_each_path(h, obs, |_, p| total += p);
    total
}

/// Best path and its probability; on exact ties the first path in
/// odometer order wins, which prefers lower states early.
pub fn best_path(h: &Hmm, obs: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), 0.0);
    for_each_path(h, obs, |path, p| {
        if p > best.1 {
            best = (path.to_vec(), p);
        }
    });
    best
}

/// A random valid model: self-loops in (0.05, 0.95), weights normalized,
/// means N(0, 1), variances in (0.3, 2).
pub fn random_hmm(rng: &mut impl rand::Rng, n_states: usize, n_mix: usize, dim: usize) -> Hmm {
    use inkrec::hmm::{Component, GaussianMixture};
    let loops: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.05..0.95)).collect();
    let states = (0..n_states)
        .map(|_| {
            let raw: Vec<f64> = (0..n_mix).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let comps = raw
                .iter()
                .map(|w| {
                    let mean = (0..dim)
                        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    let var = (0..dim).map(|_| rng.gen_range(0.3..2.0)).collect();
                    Component::new(w / total, mean, var)
                })
                .collect();
            GaussianMixture::new(comps).unwrap()
        })
        .collect();
    Hmm::from_self_loops(&loops, states).unwrap()
}

pub fn random_obs(rng: &mut impl rand::Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|_| {
            (0..dim)
                .map(|_| 1.2 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect()
}
