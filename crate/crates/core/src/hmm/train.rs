//! Flat-start initialisation, Baum-Welch re-estimation and mixture growth.

use serde::{Deserialize, Serialize};

use super::decode::{backward_table, forward_table, log_transitions};
use super::mixture::{Component, GaussianMixture};
use super::model::Hmm;
use crate::error::{Error, Result};

/// Occupancy below which a mixture component is considered collapsed.
const MIN_COMPONENT_OCCUPANCY: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Stop once the per-frame log-likelihood gain falls below this.
    pub convergence: f64,
    pub variance_floor: f64,
    pub target_mixtures: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 40,
            convergence: 1e-4,
            variance_floor: 1e-4,
            target_mixtures: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence >= 0.0) {
            return Err(Error::Config(format!(
                "convergence threshold {} is negative",
                self.convergence
            )));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config(format!(
                "variance floor {} must be positive",
                self.variance_floor
            )));
        }
        if self.target_mixtures == 0 {
            return Err(Error::Config("target_mixtures must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_lengths<F: AsRef<[f64]>>(data: &[Vec<F>], n_states: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NoData);
    }
    if let Some((index, seq)) = data.iter().enumerate().find(|(_, s)| s.len() < n_states) {
        return Err(Error::SequenceTooShort {
            index,
            len: seq.len(),
            n_states,
        });
    }
    Ok(())
}

/// Every state starts from the global mean and (floored) variance of all
/// frames; transitions are 0.5 / 0.5. With `n_mix > 1` the single Gaussian
/// is split until it has `n_mix` components.
pub fn flat_start<F: AsRef<[f64]>>(
    data: &[Vec<F>],
    n_states: usize,
    n_mix: usize,
    variance_floor: f64,
) -> Result<Hmm> {
    if n_states == 0 {
        return Err(Error::Config("n_states must be at least 1".into()));
    }
    check_lengths(data, n_states)?;
    let dim = data[0][0].as_ref().len();
    let mut count = 0.0;
    let mut sum = vec![0.0; dim];
    for frame in data.iter().flatten() {
        let frame = frame.as_ref();
        if frame.len() != dim {
            return Err(Error::InvalidValue(format!(
                "frame of dimension {} in {dim}-D data",
                frame.len()
            )));
        }
        count += 1.0;
        for (s, x) in sum.iter_mut().zip(frame) {
            *s += x;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let mut sq = vec![0.0; dim];
    for frame in data.iter().flatten() {
        for ((s, x), m) in sq.iter_mut().zip(frame.as_ref()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let var: Vec<f64> = sq.iter().map(|s| (s / count).max(variance_floor)).collect();
    let mut gm = GaussianMixture::single(mean, var);
    while gm.len() < n_mix.max(1) {
        gm = gm.split_heaviest(gm.len().min(n_mix - gm.len()));
    }
    Hmm::from_self_loops(&vec![0.5; n_states], vec![gm; n_states])
}

/// Doubles every state's component count, capped at `target`; once the
/// cap is closer than a full doubling only the heaviest components split.
pub fn split_mixtures(h: &Hmm, target: usize) -> Hmm {
    let states = h
        .states()
        .iter()
        .map(|gm| {
            if gm.len() >= target {
                gm.clone()
            } else {
                gm.split_heaviest(gm.len().min(target - gm.len()))
            }
        })
        .collect();
    Hmm::from_parts_unchecked(h.transitions().to_vec(), states)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Hmm,
    /// Total log-likelihood of the data under the model entering each
    /// iteration, followed by that of the returned model.
    pub trace: Vec<f64>,
    pub dropped_components: usize,
}

struct StateStats {
    occ: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
    stay: f64,
    advance: f64,
}

impl StateStats {
    fn new(n_mix: usize, dim: usize) -> Self {
        StateStats {
            occ: vec![0.0; n_mix],
            sum: vec![vec![0.0; dim]; n_mix],
            sum_sq: vec![vec![0.0; dim]; n_mix],
            stay: 0.0,
            advance: 0.0,
        }
    }
}

/// E-step over all sequences. Returns the total log-likelihood of the
/// admissible sequences, their frame count and the accumulated statistics.
fn accumulate<F: AsRef<[f64]>>(h: &Hmm, data: &[Vec<F>]) -> (f64, usize, Vec<StateStats>) {
    let n = h.n_states();
    let dim = h.dim();
    let (ls, la) = log_transitions(h);
    let mut stats: Vec<StateStats> = h
        .states()
        .iter()
        .map(|gm| StateStats::new(gm.len(), dim))
        .collect();
    let mut total = 0.0;
    let mut frames = 0;
    let max_mix = h
        .states()
        .iter()
        .map(GaussianMixture::len)
        .max()
        .unwrap_or(1);
    let mut comp_buf = Vec::with_capacity(max_mix);
    let mut comp: Vec<f64> = Vec::new();
    for seq in data {
        let t_len = seq.len();
        if t_len < n {
            continue;
        }
        // comp[(t * n + i) * max_mix + m] = ln w_m + ln N_m(o_t) for state i
        comp.clear();
        comp.resize(t_len * n * max_mix, f64::NEG_INFINITY);
        let mut emit = vec![vec![0.0; n]; t_len];
        for (t, o) in seq.iter().enumerate() {
            for (i, gm) in h.states().iter().enumerate() {
                emit[t][i] = gm.component_log_densities(o.as_ref(), &mut comp_buf);
                let at = (t * n + i) * max_mix;
                comp[at..at + comp_buf.len()].copy_from_slice(&comp_buf);
            }
        }
        let alpha = forward_table(h, &emit, &ls, &la);
        let beta = backward_table(h, &emit, &ls, &la);
        let ll = alpha[t_len - 1][n - 1] + la[n - 1];
        if !ll.is_finite() {
            continue;
        }
        total += ll;
        frames += t_len;
        for t in 0..t_len {
            let o = seq[t].as_ref();
            for i in 0..n {
                let lg = alpha[t][i] + beta[t][i] - ll;
                if lg == f64::NEG_INFINITY {
                    continue;
                }
                let gamma = lg.exp();
                let st = &mut stats[i];
                let at = (t * n + i) * max_mix;
                for (m, lc) in comp[at..at + st.occ.len()].iter().enumerate() {
                    let g = if st.occ.len() == 1 {
                        gamma
                    } else {
                        gamma * (lc - emit[t][i]).exp()
                    };
                    if g == 0.0 {
                        continue;
                    }
                    st.occ[m] += g;
                    for ((s, sq), &x) in st.sum[m].iter_mut().zip(&mut st.sum_sq[m]).zip(o) {
                        *s += g * x;
                        *sq += g * x * x;
                    }
                }
                if t + 1 < t_len {
                    st.stay += (alpha[t][i] + ls[i] + emit[t + 1][i] + beta[t + 1][i] - ll).exp();
                    if i + 1 < n {
                        st.advance +=
                            (alpha[t][i] + la[i] + emit[t + 1][i + 1] + beta[t + 1][i + 1] - ll)
                                .exp();
                    }
                } else if i == n - 1 {
                    st.advance += gamma;
                }
            }
        }
    }
    (total, frames, stats)
}

fn maximize(h: &Hmm, stats: &[StateStats], floor: f64, dropped: &mut usize) -> Hmm {
    let mut self_loops = Vec::with_capacity(stats.len());
    let mut states = Vec::with_capacity(stats.len());
    for (i, st) in stats.iter().enumerate() {
        let out = st.stay + st.advance;
        self_loops.push(if out > 0.0 {
            st.stay / out
        } else {
            h.self_loop(i)
        });

        let state_occ: f64 = st.occ.iter().sum();
        let old = h.states()[i].components();
        let mut comps = Vec::with_capacity(old.len());
        for (m, &occ) in st.occ.iter().enumerate() {
            if occ < MIN_COMPONENT_OCCUPANCY || state_occ <= 0.0 {
                if state_occ > 0.0 {
                    *dropped += 1;
                    log::warn!(
                        "state {}: mixture component {m} has no occupancy, dropped",
                        i + 1
                    );
                } else {
                    comps.push(old[m].clone());
                }
                continue;
            }
            let mean: Vec<f64> = st.sum[m].iter().map(|s| s / occ).collect();
            let var: Vec<f64> = st.sum_sq[m]
                .iter()
                .zip(&mean)
                .map(|(sq, mu)| (sq / occ - mu * mu).max(floor))
                .collect();
            comps.push(Component::new(occ, mean, var));
        }
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        for c in &mut comps {
            c.weight /= total;
        }
        states.push(GaussianMixture::from_components_unchecked(comps));
    }
    let mut t = h.transitions().to_vec();
    for (i, a) in self_loops.iter().enumerate() {
        t[i + 1][i + 1] = *a;
        t[i + 1][i + 2] = 1.0 - a;
    }
    Hmm::from_parts_unchecked(t, states)
}

/// Baum-Welch re-estimation until the per-frame gain drops below
/// `cfg.convergence` or `cfg.max_iterations` updates have been made.
pub fn baum_welch<F: AsRef<[f64]>>(
    h: &Hmm,
    data: &[Vec<F>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    baum_welch_observed(h, data, cfg, |_, _, _| {})
}

/// As [`baum_welch`], calling `observe(iteration, model, log_likelihood)`
/// with each model after its likelihood has been computed.
pub fn baum_welch_observed<F, O>(
    h: &Hmm,
    data: &[Vec<F>],
    cfg: &TrainConfig,
    mut observe: O,
) -> Result<TrainOutcome>
where
    F: AsRef<[f64]>,
    O: FnMut(usize, &Hmm, f64),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::NoData);
    }
    if cfg.max_iterations == 0 {
        return Ok(TrainOutcome {
            model: h.clone(),
            trace: Vec::new(),
            dropped_components: 0,
        });
    }
    if data.iter().all(|s| s.len() < h.n_states()) {
        return Err(Error::InvalidValue(
            "no sequence admits a path through the model".into(),
        ));
    }
    let mut model = h.clone();
    let mut trace = Vec::with_capacity(cfg.max_iterations + 1);
    let mut dropped = 0;
    for iter in 0..=cfg.max_iterations {
        let (ll, frames, stats) = accumulate(&model, data);
        if frames == 0 {
            return Err(Error::InvalidValue(
                "every sequence has zero likelihood under the model".into(),
            ));
        }
        observe(iter, &model, ll);
        if let Some(&prev) = trace.last() {
            let gain = (ll - prev) / frames as f64;
            trace.push(ll);
            if gain < cfg.convergence {
                break;
            }
        } else {
            trace.push(ll);
        }
        if iter == cfg.max_iterations {
            break;
        }
        model = maximize(&model, &stats, cfg.variance_floor, &mut dropped);
    }
    Ok(TrainOutcome {
        model,
        trace,
        dropped_components: dropped,
    })
}

/// Per-stage log-likelihood traces of a full training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Hmm,
    pub stages: Vec<(usize, Vec<f64>)>,
}

/// Flat start, then re-estimation after every mixture split until each
/// state holds `cfg.target_mixtures` components.
pub fn train_model<F: AsRef<[f64]>>(
    data: &[Vec<F>],
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let init = flat_start(data, n_states, 1, cfg.variance_floor)?;
    let first = baum_welch(&init, data, cfg)?;
    let mut stages = vec![(1, first.trace)];
    let mut model = first.model;
    while model
        .states()
        .iter()
        .any(|gm| gm.len() < cfg.target_mixtures)
    {
        let before: usize = model.states().iter().map(GaussianMixture::len).sum();
        let split = split_mixtures(&model, cfg.target_mixtures);
        let out = baum_welch(&split, data, cfg)?;
        let after: usize = out.model.states().iter().map(GaussianMixture::len).sum();
        stages.push((out.model.mixture_count(), out.trace));
        model = out.model;
        // Components keep collapsing on this data; further splits will not stick.
        if after <= before {
            log::warn!("mixture growth stalled at {after} components");
            break;
        }
    }
    Ok(TrainedModel { model, stages })
}
