use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mixture::{GaussianMixture, SUM_TOLERANCE};
use crate::error::{Error, Result};

/// Left-to-right continuous-density HMM.
///
/// The transition matrix is `(n + 2) × (n + 2)` over
/// `{entry, s1 .. sn, exit}`. Entry moves to `s1` with probability one,
/// each emitting state either loops or advances by one, and the exit row
/// is an absorbing self-loop so every row is stochastic. Entry and exit do
/// not emit.
#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    transitions: Vec<Vec<f64>>,
    states: Vec<GaussianMixture>,
}

impl Hmm {
    pub fn new(transitions: Vec<Vec<f64>>, states: Vec<GaussianMixture>) -> Result<Self> {
        let h = Hmm {
            transitions,
            states,
        };
        h.validate()?;
        Ok(h)
    }

    /// Builds the chain from per-state self-loop probabilities.
    pub fn from_self_loops(self_loops: &[f64], states: Vec<GaussianMixture>) -> Result<Self> {
        let n = states.len();
        if self_loops.len() != n {
            return Err(Error::Model(format!(
                "{} self-loop probabilities for {n} states",
                self_loops.len()
            )));
        }
        let mut t = vec![vec![0.0; n + 2]; n + 2];
        t[0][1] = 1.0;
        for (i, &a) in self_loops.iter().enumerate() {
            t[i + 1][i + 1] = a;
            t[i + 1][i + 2] = 1.0 - a;
        }
        t[n + 1][n + 1] = 1.0;
        Hmm::new(t, states)
    }

    pub(crate) fn from_parts_unchecked(
        transitions: Vec<Vec<f64>>,
        states: Vec<GaussianMixture>,
    ) -> Self {
        Hmm {
            transitions,
            states,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Model("no emitting states".into()));
        }
        let size = n + 2;
        if self.transitions.len() != size || self.transitions.iter().any(|r| r.len() != size) {
            return Err(Error::Model(format!(
                "transition matrix must be {size}×{size}"
            )));
        }
        let dim = self.states[0].dim();
        for (i, s) in self.states.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::Model(format!("state {}: {e}", i + 1)))?;
            if s.dim() != dim {
                return Err(Error::Model(format!(
                    "state {} has dimension {}",
                    i + 1,
                    s.dim()
                )));
            }
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let mut sum = 0.0;
            for (j, &p) in row.iter().enumerate() {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::Model(format!(
                        "transition [{i}][{j}] = {p} is not a probability"
                    )));
                }
                let allowed = match i {
                    0 => j == 1,
                    i if i == n + 1 => j == n + 1,
                    i => j == i || j == i + 1,
                };
                if !allowed && p != 0.0 {
                    return Err(Error::Model(format!(
                        "transition [{i}][{j}] breaks the left-to-right topology"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Model(format!("transition row {i} sums to {sum}")));
            }
        }
        if self.transitions[0][1] != 1.0 {
            return Err(Error::Model("entry must go to the first state".into()));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn states(&self) -> &[GaussianMixture] {
        &self.states
    }

    /// Self-loop probability of emitting state `i` (0-based).
    pub fn self_loop(&self, i: usize) -> f64 {
        self.transitions[i + 1][i + 1]
    }

    /// Advance probability of emitting state `i`; for the last state this is
    /// the probability of leaving to exit.
    pub fn advance(&self, i: usize) -> f64 {
        self.transitions[i + 1][i + 2]
    }

    pub fn mixture_count(&self) -> usize {
        self.states
            .iter()
            .map(GaussianMixture::len)
            .max()
            .unwrap_or(0)
    }

    /// Draws one observation sequence by walking the chain from entry to exit.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut state = 0;
        loop {
            let gm = &self.states[state];
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = gm.len() - 1;
            for (m, c) in gm.components().iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    pick = m;
                    break;
                }
            }
            let c = &gm.components()[pick];
            out.push(
                c.mean
                    .iter()
                    .zip(&c.var)
                    .map(|(mu, v)| {
                        let z: f64 = StandardNormal.sample(rng);
                        mu + v.sqrt() * z
                    })
                    .collect(),
            );
            if rng.gen::<f64>() >= self.self_loop(state) {
                state += 1;
                if state == self.n_states() {
                    return out;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize) -> GaussianMixture {
        GaussianMixture::single(vec![0.0; dim], vec![1.0; dim])
    }

    #[test]
    fn chain_structure() {
        let h = Hmm::from_self_loops(&[0.6, 0.3], vec![unit(2), unit(2)]).unwrap();
        let t = h.transitions();
        assert_eq!(t[0], vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t[1], vec![0.0, 0.6, 0.4, 0.0]);
        assert_eq!(t[2][3], 1.0 - 0.3);
        assert_eq!(t[3], vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_skip_and_bad_rows() {
        let mut t = Hmm::from_self_loops(&[0.5, 0.5, 0.5], vec![unit(1), unit(1), unit(1)])
            .unwrap()
            .transitions()
            .to_vec();
        t[1][3] = 0.1;
        t[1][2] = 0.4;
        assert!(Hmm::new(t.clone(), vec![unit(1), unit(1), unit(1)]).is_err());
        t[1][3] = 0.0;
        t[1][2] = 0.6;
        assert!(Hmm::new(t, vec![unit(1), unit(1), unit(1)]).is_err());
    }

    #[test]
    fn samples_visit_every_state() {
        use rand::SeedableRng;
        let h = Hmm::from_self_loops(&[0.5; 4], vec![unit(3), unit(3), unit(3), unit(3)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = h.sample(&mut rng);
            assert!(s.len() >= 4);
            assert!(s.iter().all(|f| f.len() == 3));
        }
    }
}
