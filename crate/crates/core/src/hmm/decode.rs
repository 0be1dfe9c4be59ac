//! Likelihood evaluation and best-path decoding, all in the log domain.

use super::mixture::log_sum_exp2;
use super::model::Hmm;

#[inline]
fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log self-loop and advance probabilities per emitting state.
pub(crate) fn log_transitions(h: &Hmm) -> (Vec<f64>, Vec<f64>) {
    let n = h.n_states();
    (
        (0..n).map(|i| ln(h.self_loop(i))).collect(),
        (0..n).map(|i| ln(h.advance(i))).collect(),
    )
}

/// `table[t][i]` = log b_i(o_t).
pub(crate) fn emission_table<F: AsRef<[f64]>>(h: &Hmm, obs: &[F]) -> Vec<Vec<f64>> {
    obs.iter()
        .map(|o| {
            h.states()
                .iter()
                .map(|s| s.log_density(o.as_ref()))
                .collect()
        })
        .collect()
}

pub(crate) fn forward_table(h: &Hmm, emit: &[Vec<f64>], ls: &[f64], la: &[f64]) -> Vec<Vec<f64>> {
    let n = h.n_states();
    let t_len = emit.len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; n]; t_len];
    alpha[0][0] = emit[0][0];
    for t in 1..t_len {
        for i in 0..n {
            let stay = alpha[t - 1][i] + ls[i];
            let arrive = if i > 0 {
                alpha[t - 1][i - 1] + la[i - 1]
            } else {
                f64::NEG_INFINITY
            };
            alpha[t][i] = log_sum_exp2(stay, arrive) + emit[t][i];
        }
    }
    alpha
}

pub(crate) fn backward_table(h: &Hmm, emit: &[Vec<f64>], ls: &[f64], la: &[f64]) -> Vec<Vec<f64>> {
    let n = h.n_states();
    let t_len = emit.len();
    let mut beta = vec![vec![f64::NEG_INFINITY; n]; t_len];
    beta[t_len - 1][n - 1] = la[n - 1];
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            let stay = ls[i] + emit[t + 1][i] + beta[t + 1][i];
            let advance = if i + 1 < n {
                la[i] + emit[t + 1][i + 1] + beta[t + 1][i + 1]
            } else {
                f64::NEG_INFINITY
            };
            beta[t][i] = log_sum_exp2(stay, advance);
        }
    }
    beta
}

/// log P(obs | h), marginalised over every path from entry to exit.
/// Sequences shorter than the number of states have no path and score −∞.
pub fn log_forward<F: AsRef<[f64]>>(h: &Hmm, obs: &[F]) -> f64 {
    if obs.len() < h.n_states() {
        return f64::NEG_INFINITY;
    }
    let (ls, la) = log_transitions(h);
    let emit = emission_table(h, obs);
    let alpha = forward_table(h, &emit, &ls, &la);
    alpha[obs.len() - 1][h.n_states() - 1] + la[h.n_states() - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    /// 0-based emitting state per frame; empty when no path exists.
    pub states: Vec<usize>,
    pub log_prob: f64,
}

/// Most probable state path. When staying and advancing score equally the
/// predecessor with the lower state index (the advancing one) is kept.
pub fn viterbi<F: AsRef<[f64]>>(h: &Hmm, obs: &[F]) -> ViterbiPath {
    let n = h.n_states();
    let t_len = obs.len();
    if t_len < n {
        return ViterbiPath {
            states: Vec::new(),
            log_prob: f64::NEG_INFINITY,
        };
    }
    let (ls, la) = log_transitions(h);
    let emit = emission_table(h, obs);
    let mut delta = vec![vec![f64::NEG_INFINITY; n]; t_len];
    let mut from_prev = vec![vec![false; n]; t_len];
    delta[0][0] = emit[0][0];
    for t in 1..t_len {
        for i in 0..n {
            let stay = delta[t - 1][i] + ls[i];
            let arrive = if i > 0 {
                delta[t - 1][i - 1] + la[i - 1]
            } else {
                f64::NEG_INFINITY
            };
            let take_arrive = i > 0 && arrive >= stay && arrive > f64::NEG_INFINITY;
            from_prev[t][i] = take_arrive;
            delta[t][i] = if take_arrive { arrive } else { stay } + emit[t][i];
        }
    }
    let log_prob = delta[t_len - 1][n - 1] + la[n - 1];
    if log_prob == f64::NEG_INFINITY {
        return ViterbiPath {
            states: Vec::new(),
            log_prob,
        };
    }
    let mut states = vec![0; t_len];
    let mut s = n - 1;
    for t in (0..t_len).rev() {
        states[t] = s;
        if t > 0 && from_prev[t][s] {
            s -= 1;
        }
    }
    ViterbiPath { states, log_prob }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::mixture::GaussianMixture;

    fn g(mean: f64) -> GaussianMixture {
        GaussianMixture::single(vec![mean; 6], vec![1.0; 6])
    }

    #[test]
    fn one_state_zero_frame() {
        // Single frame: entry → s1 (1), emit, s1 → exit (1 − a).
        let h = Hmm::from_self_loops(&[0.0], vec![g(0.0)]).unwrap();
        let ll = log_forward(&h, &[[0.0; 6]]);
        assert!((ll - -5.513_631_199_228_036).abs() < 1e-12, "{ll}");
    }

    #[test]
    fn forced_two_state_chain() {
        let h = Hmm::from_self_loops(&[0.0, 0.0], vec![g(0.0), g(1.0)]).unwrap();
        let obs = [[0.3; 6], [0.9; 6]];
        let expect = h.states()[0].log_density(&obs[0]) + h.states()[1].log_density(&obs[1]);
        assert!((log_forward(&h, &obs) - expect).abs() < 1e-12);
        let v = viterbi(&h, &obs);
        assert_eq!(v.states, vec![0, 1]);
        assert!((v.log_prob - expect).abs() < 1e-12);
    }

    #[test]
    fn too_short_has_no_path() {
        let h = Hmm::from_self_loops(&[0.5; 3], vec![g(0.0), g(0.0), g(0.0)]).unwrap();
        let obs = [[0.0; 6], [0.0; 6]];
        assert_eq!(log_forward(&h, &obs), f64::NEG_INFINITY);
        let v = viterbi(&h, &obs);
        assert!(v.states.is_empty());
        assert_eq!(v.log_prob, f64::NEG_INFINITY);
    }

    #[test]
    fn tie_prefers_lower_state() {
        // Identical states and 0.5/0.5 transitions: every path scores alike
        // except through the final exit term, which is shared.
        let h = Hmm::from_self_loops(&[0.5, 0.5], vec![g(0.0), g(0.0)]).unwrap();
        let obs = [[0.0; 6]; 4];
        let v = viterbi(&h, &obs);
        // Backtracking prefers advancing, so the move to s2 happens as late
        // as possible.
        assert_eq!(v.states, vec![0, 0, 0, 1]);
    }

    #[test]
    fn backward_agrees_with_forward() {
        let h = Hmm::from_self_loops(&[0.7, 0.2, 0.4], vec![g(0.0), g(0.5), g(-0.5)]).unwrap();
        let obs: Vec<[f64; 6]> = (0..7).map(|t| [t as f64 * 0.1; 6]).collect();
        let (ls, la) = log_transitions(&h);
        let emit = emission_table(&h, &obs);
        let beta = backward_table(&h, &emit, &ls, &la);
        let from_beta = emit[0][0] + beta[0][0];
        assert!((from_beta - log_forward(&h, &obs)).abs() < 1e-10);
    }
}
