use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map sending the sample range of a series onto `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub center: f64,
    pub half_range: f64,
}

impl Scaler {
    pub fn identity() -> Self {
        Scaler {
            center: 0.0,
            half_range: 0.5,
        }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.center) / (2.0 * self.half_range)
    }

    pub fn inverse(&self, x: f64) -> f64 {
        self.center + 2.0 * self.half_range * x
    }

    /// Multiplier taking a scaled-unit difference back to original units.
    pub fn unit(&self) -> f64 {
        2.0 * self.half_range
    }
}

pub fn fit_scaler(series: &[f64]) -> Result<Scaler> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateScale("series contains non-finite values".into()));
    }
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if series.len() < 2 || !(hi > lo) {
        return Err(Error::DegenerateScale(format!(
            "need at least two distinct values, got range [{lo}, {hi}] over {} points",
            series.len()
        )));
    }
    Ok(Scaler {
        center: 0.5 * (hi + lo),
        half_range: 0.5 * (hi - lo),
    })
}
