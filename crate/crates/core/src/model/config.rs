use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full set of model and sampler controls. Serialized as flat JSON with
/// these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Lag order of the VAR.
    pub lags: usize,
    /// Number of nonparametric factors driving the TVPs.
    pub q_beta: usize,
    /// Number of error factors.
    pub q_q: usize,
    /// Trees per mean factor.
    pub s_beta: usize,
    /// Trees per variance factor.
    pub s_q: usize,
    pub alpha: f64,
    pub zeta: f64,
    /// Terminal-node prior variance is `1 / (2 kappa S)`.
    pub kappa: f64,
    /// Prior scale of the process innovation variances.
    pub b_v: f64,
    pub include_intercept: bool,
    /// Total sweeps, burn-in included.
    pub n_draws: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    /// Switches off the TVP block so that `B_t = 0`.
    pub constant_coefficients: bool,
    /// Minimum number of modifier rows per terminal node.
    pub n_min: usize,
    /// Map every endogenous series onto `[-0.5, 0.5]` before estimation.
    pub scale_data: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lags: 5,
            q_beta: 25,
            q_q: 3,
            s_beta: 1,
            s_q: 250,
            alpha: 0.95,
            zeta: 2.0,
            kappa: 2.0,
            b_v: 0.01,
            include_intercept: true,
            n_draws: 15_000,
            n_burn: 5_000,
            thin: 1,
            seed: 42,
            constant_coefficients: false,
            n_min: 5,
            scale_data: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(self) -> Result<Self> {
        validate_config(self)
    }

    /// Number of sweeps kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.n_draws - self.n_burn) / self.thin
    }

    pub fn is_retained(&self, sweep: usize) -> bool {
        sweep >= self.n_burn && (sweep + 1 - self.n_burn) % self.thin == 0
    }

    pub fn mean_prior_var(&self) -> f64 {
        1.0 / (2.0 * self.kappa * self.s_beta as f64)
    }

    pub fn var_prior_var(&self) -> f64 {
        1.0 / (2.0 * self.kappa * self.s_q as f64)
    }
}

pub fn validate_config(config: ModelConfig) -> Result<ModelConfig> {
    let c = &config;
    if !(c.alpha > 0.0 && c.alpha < 1.0) {
        return Err(Error::config("alpha", format!("must lie in (0, 1), got {}", c.alpha)));
    }
    if !(c.zeta > 1.0) || !c.zeta.is_finite() {
        return Err(Error::config("zeta", format!("must exceed 1, got {}", c.zeta)));
    }
    if !(c.kappa > 0.0) || !c.kappa.is_finite() {
        return Err(Error::config("kappa", format!("must be positive, got {}", c.kappa)));
    }
    if !(c.b_v > 0.0) || !c.b_v.is_finite() {
        return Err(Error::config("b_v", format!("must be positive, got {}", c.b_v)));
    }
    if c.q_q < 1 {
        return Err(Error::config("q_q", "at least one error factor is required"));
    }
    if c.s_beta < 1 {
        return Err(Error::config("s_beta", "at least one tree per mean factor is required"));
    }
    if c.s_q < 1 {
        return Err(Error::config("s_q", "at least one tree per variance factor is required"));
    }
    if c.thin < 1 {
        return Err(Error::config("thin", "thinning interval must be at least 1"));
    }
    if c.n_min < 1 {
        return Err(Error::config("n_min", "leaves need at least one observation"));
    }
    if c.n_burn >= c.n_draws {
        return Err(Error::config(
            "n_burn",
            format!("burn-in ({}) must be smaller than n_draws ({})", c.n_burn, c.n_draws),
        ));
    }
    if c.retained() == 0 {
        return Err(Error::config(
            "thin",
            format!("no draws retained with thin = {} after burn-in", c.thin),
        ));
    }
    Ok(config)
}
