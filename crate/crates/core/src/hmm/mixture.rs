use crate::error::{Error, Result};

/// Tolerance on probability-vector sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_5; // ln(2π)

pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// One diagonal-covariance Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    log_norm: f64,
}

impl Component {
    pub fn new(weight: f64, mean: Vec<f64>, var: Vec<f64>) -> Self {
        let log_norm =
            -0.5 * (mean.len() as f64 * LN_2PI + var.iter().map(|v| v.ln()).sum::<f64>());
        Component {
            weight,
            mean,
            var,
            log_norm,
        }
    }

    /// log N(x; mean, diag(var)), without the weight.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((xi, mi), vi) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xi - mi;
            q += d * d / vi;
        }
        self.log_norm - 0.5 * q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let gm = GaussianMixture { components };
        gm.validate()?;
        Ok(gm)
    }

    pub fn single(mean: Vec<f64>, var: Vec<f64>) -> Self {
        GaussianMixture {
            components: vec![Component::new(1.0, mean, var)],
        }
    }

    pub(crate) fn from_components_unchecked(components: Vec<Component>) -> Self {
        GaussianMixture { components }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.components.first() else {
            return Err(Error::Model("mixture has no components".into()));
        };
        let dim = first.mean.len();
        let mut total = 0.0;
        for (m, c) in self.components.iter().enumerate() {
            if c.mean.len() != dim || c.var.len() != dim {
                return Err(Error::Model(format!(
                    "component {m} has inconsistent dimension"
                )));
            }
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::Model(format!(
                    "component {m} has invalid weight {}",
                    c.weight
                )));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("component {m} has a non-finite mean")));
            }
            if c.var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Model(format!(
                    "component {m} has a non-positive variance"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Model(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].log_density(x);
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_density(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// Per-component `ln w + ln N(x)` written into `out`; returns their log-sum.
    pub(crate) fn component_log_densities(&self, x: &[f64], out: &mut Vec<f64>) -> f64 {
        out.clear();
        out.extend(
            self.components
                .iter()
                .map(|c| c.weight.ln() + c.log_density(x)),
        );
        log_sum_exp(out)
    }

    /// Splits the `count` heaviest components (ties to the lower index) into
    /// two halves whose means sit at ±0.2 standard deviations.
    pub fn split_heaviest(&self, count: usize) -> GaussianMixture {
        let mut order: Vec<usize> = (0..self.components.len()).collect();
        order.sort_by(|&a, &b| {
            self.components[b]
                .weight
                .total_cmp(&self.components[a].weight)
                .then(a.cmp(&b))
        });
        let mut comps = self.components.clone();
        let mut extra = Vec::new();
        for &m in order.iter().take(count) {
            let c = &self.components[m];
            let sd: Vec<f64> = c.var.iter().map(|v| v.sqrt()).collect();
            let up = c.mean.iter().zip(&sd).map(|(mu, s)| mu + 0.2 * s).collect();
            let down = c.mean.iter().zip(&sd).map(|(mu, s)| mu - 0.2 * s).collect();
            comps[m] = Component::new(0.5 * c.weight, up, c.var.clone());
            extra.push(Component::new(0.5 * c.weight, down, c.var.clone()));
        }
        comps.extend(extra);
        GaussianMixture { components: comps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_six_dims() {
        let gm = GaussianMixture::single(vec![0.0; 6], vec![1.0; 6]);
        let ll = gm.log_density(&[0.0; 6]);
        assert!((ll - -5.513_631_199_228_036).abs() < 1e-12);
        assert!((ll - -3.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert_eq!(log_sum_exp2(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn split_one_component() {
        let gm = GaussianMixture::single(vec![1.0, 2.0], vec![4.0, 0.25]);
        let s = gm.split_heaviest(1);
        assert_eq!(s.len(), 2);
        assert_eq!(s.components()[0].mean, vec![1.4, 2.1]);
        assert_eq!(s.components()[1].mean, vec![0.6, 1.9]);
        assert_eq!(s.weights(), vec![0.5, 0.5]);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_bad_weights() {
        let c = |w| Component::new(w, vec![0.0], vec![1.0]);
        assert!(GaussianMixture::new(vec![c(0.5), c(0.6)]).is_err());
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(1.0, vec![0.0], vec![0.0])]).is_err());
    }
}
