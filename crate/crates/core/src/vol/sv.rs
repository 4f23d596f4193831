use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{linearize, sample_mixture_indicators, MixtureTable, LOG_OFFSET};
use crate::error::{Error, Result};
use crate::shrinkage::sample_gig;

/// Priors of the AR(1) log-variance process: `mu ~ N(mu_mean, mu_var)`,
/// `(phi + 1) / 2 ~ Beta(phi_a, phi_b)`, `sigma2 ~ Gamma(1/2, rate sigma2_rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvPriors {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub sigma2_rate: f64,
}

impl Default for SvPriors {
    fn default() -> Self {
        SvPriors {
            mu_mean: 0.0,
            mu_var: 10.0,
            phi_a: 25.0,
            phi_b: 5.0,
            sigma2_rate: 0.5,
        }
    }
}

/// Log-variance path `h` with `h_t - mu = phi (h_{t-1} - mu) + sigma nu_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvState {
    pub h: Vec<f64>,
    pub mu: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub indicators: Vec<usize>,
}

impl SvState {
    /// Flat path at `h0` with persistence 0.9 and innovation variance 0.1.
    pub fn new(periods: usize, h0: f64) -> Self {
        SvState {
            h: vec![h0; periods],
            mu: h0,
            phi: 0.9,
            sigma2: 0.1,
            indicators: vec![0; periods],
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.h.iter().map(|h| h.exp()).collect()
    }
}

/// Forward-filter backward-sample draw of `h` given the linearized
/// observations and fixed mixture indicators.
pub fn sample_sv_path<R: Rng + ?Sized>(
    ystar: &[f64],
    indicators: &[usize],
    mu: f64,
    phi: f64,
    sigma2: f64,
    table: &MixtureTable,
    rng: &mut R,
) -> Vec<f64> {
    let n = ystar.len();
    let mut filt_m = vec![0.0; n];
    let mut filt_c = vec![0.0; n];
    let mut pred_a = vec![0.0; n];
    let mut pred_p = vec![0.0; n];
    let mut a = mu;
    let mut p = sigma2 / (1.0 - phi * phi);
    for t in 0..n {
        pred_a[t] = a;
        pred_p[t] = p;
        let i = indicators[t];
        let v = table.variances[i];
        let k = p / (p + v);
        filt_m[t] = a + k * (ystar[t] - table.means[i] - a);
        filt_c[t] = p * (1.0 - k);
        a = mu + phi * (filt_m[t] - mu);
        p = phi * phi * filt_c[t] + sigma2;
    }
    let mut h = vec![0.0; n];
    if n == 0 {
        return h;
    }
    let z: f64 = StandardNormal.sample(rng);
    h[n - 1] = filt_m[n - 1] + filt_c[n - 1].max(0.0).sqrt() * z;
    for t in (0..n - 1).rev() {
        let gain = filt_c[t] * phi / pred_p[t + 1];
        let mean = filt_m[t] + gain * (h[t + 1] - pred_a[t + 1]);
        let var = (filt_c[t] - gain * filt_c[t] * phi).max(0.0);
        let z: f64 = StandardNormal.sample(rng);
        h[t] = mean + var.sqrt() * z;
    }
    h
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
    for _ in 0..10_000 {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + sd * z;
        if x > lo && x < hi {
            return Some(x);
        }
    }
    None
}

/// One sweep of the idiosyncratic log-variance sampler: indicators, path,
/// then `mu`, `phi` (independence Metropolis–Hastings with the truncated AR
/// regression proposal) and `sigma2`.
pub fn sample_idio_sv<R: Rng + ?Sized>(
    resid: &[f64],
    state: &mut SvState,
    priors: &SvPriors,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<()> {
    let n = resid.len();
    if n != state.h.len() {
        return Err(Error::Dimension(format!(
            "{} residuals for a log-variance path of length {}",
            n,
            state.h.len()
        )));
    }
    if !(state.phi.abs() < 1.0) || !(state.sigma2 > 0.0) {
        return Err(Error::Parameter("SV state must have |phi| < 1 and sigma2 > 0".into()));
    }
    let ystar: Vec<f64> = resid.iter().map(|e| linearize(*e, LOG_OFFSET)).collect();
    state.indicators = sample_mixture_indicators(&ystar, &state.h, table, rng);
    state.h = sample_sv_path(&ystar, &state.indicators, state.mu, state.phi, state.sigma2, table, rng);
    if n < 2 {
        return Ok(());
    }
    let h = &state.h;

    // level
    let (phi, s2) = (state.phi, state.sigma2);
    let prec = 1.0 / priors.mu_var + (1.0 - phi * phi) / s2 + (n - 1) as f64 * (1.0 - phi).powi(2) / s2;
    let mut num = priors.mu_mean / priors.mu_var + (1.0 - phi * phi) * h[0] / s2;
    for t in 1..n {
        num += (1.0 - phi) * (h[t] - phi * h[t - 1]) / s2;
    }
    let z: f64 = StandardNormal.sample(rng);
    state.mu = num / prec + z / prec.sqrt();

    // persistence
    let mu = state.mu;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for t in 1..n {
        let x = h[t - 1] - mu;
        sxx += x * x;
        sxy += x * (h[t] - mu);
    }
    if sxx > 0.0 {
        if let Some(prop) = truncated_normal(sxy / sxx, (s2 / sxx).sqrt(), -1.0, 1.0, rng) {
            let log_target = |p: f64| {
                let d0 = h[0] - mu;
                (priors.phi_a - 1.0) * ((1.0 + p) / 2.0).ln()
                    + (priors.phi_b - 1.0) * ((1.0 - p) / 2.0).ln()
                    + 0.5 * (1.0 - p * p).ln()
                    - 0.5 * (1.0 - p * p) * d0 * d0 / s2
            };
            let log_ratio = log_target(prop) - log_target(state.phi);
            if rng.random::<f64>().ln() < log_ratio {
                state.phi = prop;
            }
        }
    }

    // innovation variance
    let phi = state.phi;
    let mut ss = (1.0 - phi * phi) * (h[0] - mu).powi(2);
    for t in 1..n {
        ss += (h[t] - mu - phi * (h[t - 1] - mu)).powi(2);
    }
    state.sigma2 = sample_gig(0.5 - 0.5 * n as f64, ss, 2.0 * priors.sigma2_rate, rng)?.max(1e-12);
    Ok(())
}
