//! Domain types, configuration and data preparation shared by the sampler and
//! the post-estimation analytics.

mod config;
mod scaler;
mod state;

pub use config::{validate_config, ModelConfig};
pub use scaler::{fit_scaler, Scaler};
pub use state::{factor_model_loglik, EquationState, FactorState, ModelState};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Endogenous panel plus effect modifiers, sharing one date index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `T x M` endogenous series.
    pub y: DMatrix<f64>,
    /// `T x N` effect modifiers.
    pub z: DMatrix<f64>,
    pub variable_names: Vec<String>,
    pub modifier_names: Vec<String>,
    pub dates: Vec<String>,
}

impl Dataset {
    pub fn new(
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        variable_names: Vec<String>,
        modifier_names: Vec<String>,
        dates: Vec<String>,
    ) -> Result<Self> {
        let t = y.nrows();
        if z.nrows() != t || dates.len() != t {
            return Err(Error::Dimension(format!(
                "Y has {t} rows, Z has {}, dates has {}",
                z.nrows(),
                dates.len()
            )));
        }
        if variable_names.len() != y.ncols() || modifier_names.len() != z.ncols() {
            return Err(Error::Dimension("name lists do not match column counts".into()));
        }
        if z.ncols() == 0 {
            return Err(Error::Dimension("at least one effect modifier is required".into()));
        }
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("dataset contains missing or non-finite values".into()));
        }
        Ok(Dataset {
            y,
            z,
            variable_names,
            modifier_names,
            dates,
        })
    }

    pub fn periods(&self) -> usize {
        self.y.nrows()
    }

    pub fn variables(&self) -> usize {
        self.y.ncols()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variable_names.iter().position(|n| n == name)
    }

    pub fn modifier_index(&self, name: &str) -> Option<usize> {
        self.modifier_names.iter().position(|n| n == name)
    }
}

/// Regression layout consumed by the sampler: responses, regressors and
/// modifiers over the usable periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignData {
    /// `T x M` responses, in estimation units.
    pub y: DMatrix<f64>,
    /// `T x K` regressors; row `t` is `(1?, y'_{t-1}, ..., y'_{t-P})`.
    pub x: DMatrix<f64>,
    /// `T x N` modifiers, untransformed.
    pub z: DMatrix<f64>,
    /// VAR lag order; zero for a regression on exogenous covariates.
    pub lags: usize,
    pub include_intercept: bool,
    pub dates: Vec<String>,
    pub variable_names: Vec<String>,
    pub modifier_names: Vec<String>,
    /// Per-response scalers when the responses were mapped to `[-0.5, 0.5]`.
    pub scalers: Option<Vec<Scaler>>,
}

impl DesignData {
    /// Regression with user-supplied covariates (no lag structure).
    pub fn regression(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        dates: Vec<String>,
    ) -> Result<Self> {
        let t = y.nrows();
        if x.nrows() != t || z.nrows() != t || dates.len() != t {
            return Err(Error::Dimension("y, x, z and dates must share row count".into()));
        }
        if t < 2 || x.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::Dimension("empty regression design".into()));
        }
        let m = y.ncols();
        let n = z.ncols();
        Ok(DesignData {
            y,
            x,
            z,
            lags: 0,
            include_intercept: false,
            dates,
            variable_names: (0..m).map(|i| format!("y{}", i + 1)).collect(),
            modifier_names: (0..n).map(|i| format!("z{}", i + 1)).collect(),
            scalers: None,
        })
    }

    pub fn periods(&self) -> usize {
        self.y.nrows()
    }

    pub fn variables(&self) -> usize {
        self.y.ncols()
    }

    pub fn regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn modifiers(&self) -> usize {
        self.z.ncols()
    }

    /// Column offset of the first lag block inside `x`.
    pub fn lag_offset(&self) -> usize {
        usize::from(self.include_intercept)
    }

    /// Multiplier converting response `m` from estimation units to original
    /// units (1 when unscaled).
    pub fn unit(&self, m: usize) -> f64 {
        self.scalers.as_ref().map_or(1.0, |s| s[m].unit())
    }

    /// Maps one equation's coefficient row (length `K`) to original units.
    /// The first entry of the result is the implied intercept whenever either
    /// an intercept column exists or the responses were centered.
    pub fn coefficients_to_original(&self, m: usize, coeffs: &[f64]) -> Vec<f64> {
        let Some(scalers) = &self.scalers else {
            return coeffs.to_vec();
        };
        let unit_m = scalers[m].unit();
        let mut out = coeffs.to_vec();
        let mut shift = 0.0;
        for (j, c) in coeffs.iter().enumerate() {
            match self.regressor_scaler(j) {
                Some(sc) => {
                    out[j] = unit_m * c / sc.unit();
                    shift += c * sc.center / sc.unit();
                }
                None => out[j] = unit_m * c,
            }
        }
        if self.include_intercept {
            out[0] = scalers[m].center + unit_m * (coeffs[0] - shift);
        }
        out
    }

    fn regressor_scaler(&self, j: usize) -> Option<Scaler> {
        let scalers = self.scalers.as_ref()?;
        if self.lags == 0 || j < self.lag_offset() {
            return None;
        }
        let m = self.variables();
        Some(scalers[(j - self.lag_offset()) % m])
    }
}

/// Builds the lagged design: row `t` of `X` holds `(1?, y'_{t-1}, ..., y'_{t-P})`,
/// and `Y`, `Z` and the dates are trimmed to the `T - P` usable rows.
pub fn build_design(dataset: &Dataset, lags: usize, include_intercept: bool) -> Result<DesignData> {
    let t_raw = dataset.periods();
    let m = dataset.variables();
    if lags == 0 {
        return Err(Error::Dimension("VAR lag order must be at least 1".into()));
    }
    if t_raw < lags + 2 {
        return Err(Error::Dimension(format!(
            "{t_raw} rows cannot support {lags} lags (need at least {})",
            lags + 2
        )));
    }
    let t = t_raw - lags;
    let k = m * lags + usize::from(include_intercept);
    let off = usize::from(include_intercept);
    let x = DMatrix::from_fn(t, k, |row, col| {
        if include_intercept && col == 0 {
            return 1.0;
        }
        let c = col - off;
        let (p, i) = (c / m + 1, c % m);
        dataset.y[(row + lags - p, i)]
    });
    Ok(DesignData {
        y: dataset.y.rows(lags, t).into_owned(),
        x,
        z: dataset.z.rows(lags, t).into_owned(),
        lags,
        include_intercept,
        dates: dataset.dates[lags..].to_vec(),
        variable_names: dataset.variable_names.clone(),
        modifier_names: dataset.modifier_names.clone(),
        scalers: None,
    })
}

/// Scales the endogenous series (when configured) and builds the design.
pub fn prepare_design(dataset: &Dataset, config: &ModelConfig) -> Result<DesignData> {
    if !config.scale_data {
        return build_design(dataset, config.lags, config.include_intercept);
    }
    let scalers = (0..dataset.variables())
        .map(|i| fit_scaler(dataset.y.column(i).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let mut scaled = dataset.clone();
    for (i, s) in scalers.iter().enumerate() {
        scaled.y.column_mut(i).apply(|v| *v = s.forward(*v));
    }
    let mut design = build_design(&scaled, config.lags, config.include_intercept)?;
    design.scalers = Some(scalers);
    Ok(design)
}
