//! Volatility machinery: the ten-component mixture approximation of a
//! log chi-squared variable, tree-based factor variances fitted on the
//! linearized squared factors, and an AR(1) stochastic-volatility sampler.

mod sv;

pub use sv::{sample_idio_sv, sample_sv_path, SvPriors, SvState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{bart_sweep, Ensemble, MoveProbs, MoveStats, SplitData, TreePrior, WeightedTarget};

/// Constant added to squared values before taking logs.
pub const LOG_OFFSET: f64 = 1e-6;

// (weight, mean, variance) of the log chi-squared(1) approximation
const OMORI: [(f64, f64, f64); 10] = [
    (0.00609, 1.92677, 0.11265),
    (0.04775, 1.34744, 0.17788),
    (0.13057, 0.73504, 0.26768),
    (0.20674, 0.02266, 0.40611),
    (0.22715, -0.85173, 0.62699),
    (0.18842, -1.97278, 0.98583),
    (0.12047, -3.46788, 1.57469),
    (0.05591, -5.55246, 2.54498),
    (0.01575, -8.68384, 4.16591),
    (0.00115, -14.65000, 7.33342),
];

/// Finite Gaussian mixture approximating the distribution of `log eps^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTable {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Default for MixtureTable {
    fn default() -> Self {
        MixtureTable::omori()
    }
}

impl MixtureTable {
    pub fn omori() -> Self {
        MixtureTable {
            weights: OMORI.iter().map(|c| c.0).collect(),
            means: OMORI.iter().map(|c| c.1).collect(),
            variances: OMORI.iter().map(|c| c.2).collect(),
        }
    }

    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || means.len() != variances.len() {
            return Err(Error::Dimension("mixture table columns differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Parameter("mixture weights must be >= 0 and variances > 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter(format!("mixture weights sum to {total}")));
        }
        Ok(MixtureTable {
            weights,
            means,
            variances,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        (0..self.len())
            .map(|i| self.weights[i] * (self.variances[i] + (self.means[i] - mu).powi(2)))
            .sum()
    }

    /// Unnormalized log-probabilities of each component given a residual.
    fn log_posterior(&self, e: f64, out: &mut [f64]) {
        for i in 0..self.len() {
            let d = e - self.means[i];
            out[i] = self.weights[i].ln() - 0.5 * self.variances[i].ln() - 0.5 * d * d / self.variances[i];
        }
    }

    /// Posterior component probabilities for a residual `e`.
    pub fn posterior(&self, e: f64) -> Vec<f64> {
        let mut lp = vec![0.0; self.len()];
        self.log_posterior(e, &mut lp);
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = lp.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }
}

pub fn linearize(q: f64, offset: f64) -> f64 {
    (q * q + offset).ln()
}

/// Draws each indicator from `P(i) ∝ w_i N(resid_t; fit_t + m_i, v_i)`,
/// normalized in log space.
pub fn sample_mixture_indicators<R: Rng + ?Sized>(
    resid: &[f64],
    fit: &[f64],
    table: &MixtureTable,
    rng: &mut R,
) -> Vec<usize> {
    let k = table.len();
    let mut lp = vec![0.0; k];
    resid
        .iter()
        .zip(fit)
        .map(|(r, f)| {
            table.log_posterior(r - f, &mut lp);
            let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in lp.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            let mut u = rng.random::<f64>() * total;
            for (i, p) in lp.iter().enumerate() {
                if u < *p {
                    return i;
                }
                u -= p;
            }
            k - 1
        })
        .collect()
}

/// Tree ensemble for one factor's log-variance plus its mixture indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorVolState {
    pub ensemble: Ensemble,
    pub indicators: Vec<usize>,
    pub offset: f64,
}

impl FactorVolState {
    pub fn new(trees: usize, prior_var: f64, periods: usize) -> Result<Self> {
        Ok(FactorVolState {
            ensemble: Ensemble::new(trees, 1, prior_var)?,
            indicators: vec![0; periods],
            offset: LOG_OFFSET,
        })
    }

    /// `r(z) = exp(sum of tree evaluations)`.
    pub fn factor_variance(&self, z: &[f64]) -> f64 {
        self.ensemble.evaluate(z).exp()
    }

    /// Log-variance at every modifier row.
    pub fn log_variance_path(&self, data: &SplitData) -> Vec<f64> {
        self.ensemble.fit(data)
    }
}

pub fn factor_variance(state: &FactorVolState, z: &[f64]) -> f64 {
    state.factor_variance(z)
}

/// Resamples the mixture indicators of `log(q^2 + offset)` given the current
/// tree fit, then updates every variance tree against the mixture-adjusted
/// target.
pub fn heterobart_sweep<R: Rng + ?Sized>(
    state: &mut FactorVolState,
    q: &[f64],
    data: &SplitData,
    prior: &TreePrior,
    probs: &MoveProbs,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<MoveStats> {
    if q.len() != data.rows() {
        return Err(Error::Dimension(format!(
            "factor path has {} periods, modifiers have {}",
            q.len(),
            data.rows()
        )));
    }
    let y: Vec<f64> = q.iter().map(|v| linearize(*v, state.offset)).collect();
    let fit = state.ensemble.fit(data);
    state.indicators = sample_mixture_indicators(&y, &fit, table, rng);
    let u = y
        .iter()
        .zip(&state.indicators)
        .map(|(v, &i)| v - table.means[i])
        .collect();
    let w = state.indicators.iter().map(|&i| table.variances[i]).collect();
    let target = WeightedTarget::dense(u, w)?;
    Ok(bart_sweep(&mut state.ensemble, &target, data, prior, probs, rng))
}
