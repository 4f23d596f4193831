//! Forward simulation of the model for tests and demonstrations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, DesignData};
use crate::sampler::RetainedDraw;
use crate::structural::{companion, spectral_radius};

/// Generating law of one effect modifier, evaluated at the usable-period
/// index `t` (negative during burn-in and presample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ModifierLaw {
    Trend,
    /// 1 on `start <= t < end`, 0 elsewhere.
    Regime { start: i64, end: i64 },
    Ar1 { phi: f64, sd: f64 },
    Sine { period: f64 },
    Uniform { low: f64, high: f64 },
}

/// Deterministic path as a function of the modifiers and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum PathLaw {
    /// `low` when `z_modifier <= threshold`, else `high`.
    Step { modifier: usize, threshold: f64, low: f64, high: f64 },
    Sine { amplitude: f64, period: f64, phase: f64 },
}

impl PathLaw {
    fn eval(&self, z: &[f64], t: i64) -> f64 {
        match *self {
            PathLaw::Step { modifier, threshold, low, high } => {
                if z[modifier] <= threshold {
                    low
                } else {
                    high
                }
            }
            PathLaw::Sine { amplitude, period, phase } => {
                amplitude * (2.0 * std::f64::consts::PI * t as f64 / period + phase).sin()
            }
        }
    }

    fn modifier(&self) -> Option<usize> {
        match self {
            PathLaw::Step { modifier, .. } => Some(*modifier),
            PathLaw::Sine { .. } => None,
        }
    }
}

/// Time variation added to one regressor coefficient (design layout,
/// intercept first when present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientLaw {
    pub equation: usize,
    pub regressor: usize,
    #[serde(flatten)]
    pub path: PathLaw,
}

/// Log-variance law of an error factor or an idiosyncratic error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum VarianceLaw {
    Constant { log_var: f64 },
    Path {
        #[serde(flatten)]
        path: PathLaw,
    },
    /// `h_t - mu = phi (h_{t-1} - mu) + sqrt(sigma2) e_t`, started at `mu`.
    Sv { mu: f64, phi: f64, sigma2: f64 },
}

fn default_burn_in() -> usize {
    100
}

/// Full generative specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub periods: usize,
    pub lags: usize,
    #[serde(default = "yes")]
    pub include_intercept: bool,
    /// Constant coefficients, `M` rows of `K` entries in design layout.
    pub coefficients: Vec<Vec<f64>>,
    #[serde(default)]
    pub coefficient_laws: Vec<CoefficientLaw>,
    pub modifiers: Vec<ModifierLaw>,
    /// Error-factor loadings, `M` rows of `Q_q` entries.
    pub gamma: Vec<Vec<f64>>,
    pub factor_variance: Vec<VarianceLaw>,
    pub idio_variance: Vec<VarianceLaw>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub allow_explosive: bool,
}

fn yes() -> bool {
    true
}

/// Simulated data and the parameters that generated it. The truth is laid
/// out like a retained draw over the usable periods: `a` holds the constant
/// coefficients and `beta` the time-varying deviations.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: RetainedDraw,
}

/// Quarterly ISO dates starting in 1950Q1.
pub fn quarterly_dates(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{}-{:02}-01", 1950 + i / 4, 3 * (i % 4) + 1)).collect()
}

impl DgpSpec {
    pub fn variables(&self) -> usize {
        self.coefficients.len()
    }

    pub fn regressors(&self) -> usize {
        self.variables() * self.lags + usize::from(self.include_intercept)
    }

    fn validate(&self) -> Result<()> {
        let (m, k) = (self.variables(), self.regressors());
        let q = self.factor_variance.len();
        let bad = |msg: String| Err(Error::Simulation(msg));
        if m == 0 || self.lags == 0 || self.periods < 2 {
            return bad("need at least one variable, one lag and two periods".into());
        }
        if self.coefficients.iter().any(|r| r.len() != k) {
            return bad(format!("each coefficient row needs {k} entries"));
        }
        if self.gamma.len() != m || self.gamma.iter().any(|r| r.len() != q) || q == 0 {
            return bad(format!("gamma must be {m} x {q} with one variance law per factor"));
        }
        if self.idio_variance.len() != m {
            return bad(format!("need {m} idiosyncratic variance laws"));
        }
        if self.modifiers.is_empty() {
            return bad("at least one effect modifier is required".into());
        }
        let n = self.modifiers.len();
        for law in &self.coefficient_laws {
            if law.equation >= m || law.regressor >= k {
                return bad(format!("coefficient law targets ({}, {}) outside {m} x {k}", law.equation, law.regressor));
            }
        }
        let paths = self
            .coefficient_laws
            .iter()
            .map(|l| &l.path)
            .chain(self.factor_variance.iter().chain(&self.idio_variance).filter_map(|v| match v {
                VarianceLaw::Path { path } => Some(path),
                _ => None,
            }));
        for p in paths {
            if p.modifier().is_some_and(|j| j >= n) {
                return bad(format!("path refers to a modifier outside 0..{n}"));
            }
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn modifier_rows(laws: &[ModifierLaw], start: i64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; laws.len()]; n];
    for (j, law) in laws.iter().enumerate() {
        let mut prev = 0.0;
        for (i, row) in rows.iter_mut().enumerate() {
            let t = start + i as i64;
            row[j] = match *law {
                ModifierLaw::Trend => t as f64,
                ModifierLaw::Regime { start, end } => f64::from(u8::from(t >= start && t < end)),
                ModifierLaw::Ar1 { phi, sd } => {
                    prev = phi * prev + sd * normal(rng);
                    prev
                }
                ModifierLaw::Sine { period } => (2.0 * std::f64::consts::PI * t as f64 / period).sin(),
                ModifierLaw::Uniform { low, high } => low + (high - low) * rand::Rng::random::<f64>(rng),
            };
        }
    }
    rows
}

fn log_variance_paths(laws: &[VarianceLaw], z: &[Vec<f64>], start: i64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    laws.iter()
        .map(|law| {
            let mut h = match law {
                VarianceLaw::Sv { mu, .. } => *mu,
                _ => 0.0,
            };
            z.iter()
                .enumerate()
                .map(|(i, zi)| match law {
                    VarianceLaw::Constant { log_var } => *log_var,
                    VarianceLaw::Path { path } => path.eval(zi, start + i as i64),
                    VarianceLaw::Sv { mu, phi, sigma2 } => {
                        h = mu + phi * (h - mu) + sigma2.sqrt() * normal(rng);
                        h
                    }
                })
                .collect()
        })
        .collect()
}

/// Simulates `lags + periods` observations (after a discarded burn-in) from
/// the spec; the design built with `spec.lags` has exactly `periods` rows,
/// aligned with the returned truth.
pub fn simulate_dgp(spec: &DgpSpec, seed: u64) -> Result<Simulation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k, p) = (spec.variables(), spec.regressors(), spec.lags);
    let q = spec.factor_variance.len();
    let total = spec.burn_in + p + spec.periods;
    let start = -((spec.burn_in + p) as i64);
    let z = modifier_rows(&spec.modifiers, start, total, &mut rng);
    let log_r = log_variance_paths(&spec.factor_variance, &z, start, &mut rng);
    let log_s2 = log_variance_paths(&spec.idio_variance, &z, start, &mut rng);
    let off = usize::from(spec.include_intercept);
    let coeff_at = |i: usize| -> Vec<Vec<f64>> {
        let mut c = spec.coefficients.clone();
        for law in &spec.coefficient_laws {
            c[law.equation][law.regressor] += law.path.eval(&z[i], start + i as i64);
        }
        c
    };
    let mut y = DMatrix::zeros(total, m);
    let mut factors = DMatrix::zeros(total, q);
    let gamma = DMatrix::from_fn(m, q, |i, j| spec.gamma[i][j]);
    for i in 0..total {
        let c = coeff_at(i);
        if !spec.allow_explosive {
            let lags: Vec<DMatrix<f64>> = (0..p)
                .map(|l| DMatrix::from_fn(m, m, |r, s| c[r][off + l * m + s]))
                .collect();
            let rho = spectral_radius(&companion(&lags));
            if rho >= 1.0 {
                return Err(Error::Simulation(format!(
                    "coefficients at period {} are explosive (spectral radius {rho:.4})",
                    start + i as i64
                )));
            }
        }
        let f = DVector::from_fn(q, |j, _| (0.5 * log_r[j][i]).exp() * normal(&mut rng));
        let shock = &gamma * &f;
        for r in 0..m {
            let mut v = if spec.include_intercept { c[r][0] } else { 0.0 };
            for l in 0..p {
                if i > l {
                    for s in 0..m {
                        v += c[r][off + l * m + s] * y[(i - l - 1, s)];
                    }
                }
            }
            v += shock[r] + (0.5 * log_s2[r][i]).exp() * normal(&mut rng);
            y[(i, r)] = v;
        }
        factors.row_mut(i).copy_from(&f.transpose());
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulation("simulated series diverged".into()));
    }
    let keep = spec.burn_in;
    let n = p + spec.periods;
    let dataset = Dataset::new(
        y.rows(keep, n).into_owned(),
        DMatrix::from_fn(n, spec.modifiers.len(), |r, j| z[keep + r][j]),
        (0..m).map(|i| format!("y{}", i + 1)).collect(),
        (0..spec.modifiers.len()).map(|j| format!("z{}", j + 1)).collect(),
        quarterly_dates(n),
    )?;
    let first = keep + p;
    let a = DMatrix::from_fn(m, k, |i, j| spec.coefficients[i][j]);
    let beta = (0..m)
        .map(|eq| {
            DMatrix::from_fn(spec.periods, k, |t, j| coeff_at(first + t)[eq][j] - spec.coefficients[eq][j])
        })
        .collect();
    let sv_params = DMatrix::from_fn(m, 3, |i, c| match spec.idio_variance[i] {
        VarianceLaw::Sv { mu, phi, sigma2 } => [mu, phi, sigma2][c],
        _ => 0.0,
    });
    let truth = RetainedDraw {
        sweep: 0,
        a,
        beta,
        lambda: vec![DMatrix::zeros(k, 0); m],
        v: DMatrix::zeros(m, k),
        mean_trees: vec![Vec::new(); m],
        gamma,
        q: factors.rows(first, spec.periods).into_owned(),
        log_r: DMatrix::from_fn(spec.periods, q, |t, j| log_r[j][first + t]),
        log_sigma2: DMatrix::from_fn(spec.periods, m, |t, i| log_s2[i][first + t]),
        sv_params,
    };
    Ok(Simulation { dataset, truth })
}

/// Path of the coefficient on unemployment in the single-equation toy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ToyLaw {
    /// `low` for `t < break_at`, `high` afterwards.
    Step { break_at: usize, low: f64, high: f64 },
    Sine { level: f64, amplitude: f64, period: f64 },
}

impl ToyLaw {
    pub fn coefficient(&self, t: usize) -> f64 {
        match *self {
            ToyLaw::Step { break_at, low, high } => {
                if t < break_at {
                    low
                } else {
                    high
                }
            }
            ToyLaw::Sine { level, amplitude, period } => {
                level + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin()
            }
        }
    }
}

/// Single-equation Phillips-curve data: `inflation_t = c + beta_t u_t + e_t`
/// with an AR(1) unemployment rate and a time-trend modifier. Returns the
/// two-column panel (inflation, unemployment) and the true `beta_t`.
pub fn simulate_toy_phillips(
    periods: usize,
    law: &ToyLaw,
    intercept: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    if periods < 10 || !(noise_sd > 0.0) {
        return Err(Error::Simulation("toy needs at least 10 periods and positive noise".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = 5.0;
    for _ in 0..50 {
        u = 5.0 + 0.9 * (u - 5.0) + 0.4 * normal(&mut rng);
    }
    let mut y = DMatrix::zeros(periods, 2);
    let mut beta = Vec::with_capacity(periods);
    for t in 0..periods {
        u = 5.0 + 0.9 * (u - 5.0) + 0.4 * normal(&mut rng);
        let b = law.coefficient(t);
        y[(t, 0)] = intercept + b * u + noise_sd * normal(&mut rng);
        y[(t, 1)] = u;
        beta.push(b);
    }
    let ds = Dataset::new(
        y,
        DMatrix::from_fn(periods, 1, |t, _| t as f64),
        vec!["inflation".into(), "unemployment".into()],
        vec!["trend".into()],
        quarterly_dates(periods),
    )?;
    Ok((ds, beta))
}

/// Regression of the first series on an intercept and the second series,
/// with the modifiers of the dataset.
pub fn toy_phillips_design(ds: &Dataset) -> Result<DesignData> {
    if ds.variables() != 2 {
        return Err(Error::Dimension(format!(
            "the toy regression needs exactly two series, got {}",
            ds.variables()
        )));
    }
    let t = ds.periods();
    let mut d = DesignData::regression(
        ds.y.columns(0, 1).into_owned(),
        DMatrix::from_fn(t, 2, |r, c| if c == 0 { 1.0 } else { ds.y[(r, 1)] }),
        ds.z.clone(),
        ds.dates.clone(),
    )?;
    d.include_intercept = true;
    d.variable_names = vec![ds.variable_names[0].clone()];
    d.modifier_names = ds.modifier_names.clone();
    Ok(d)
}
