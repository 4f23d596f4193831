//! Gaussian draws and densities expressed through Cholesky factors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Cholesky factor of a symmetric positive definite matrix, retrying with a
/// small diagonal jitter when rounding has broken definiteness.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Some(c);
    }
    let scale = sym.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for k in [1e-12, 1e-10, 1e-8] {
        let mut j = sym.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += k * scale;
        }
        if let Some(c) = Cholesky::new(j) {
            return Some(c);
        }
    }
    None
}

/// Moments of `N(Q^{-1} b, Q^{-1})` from the precision `Q` and shift `b`.
pub fn precision_moments(precision: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = robust_cholesky(precision)
        .ok_or_else(|| Error::Parameter("posterior precision is not positive definite".into()))?;
    Ok((chol.solve(b), chol.inverse()))
}

/// Draws from `N(Q^{-1} b, Q^{-1})` without forming the covariance.
pub fn draw_from_precision<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = robust_cholesky(precision)
        .ok_or_else(|| Error::Parameter("posterior precision is not positive definite".into()))?;
    let mean = chol.solve(b);
    let z = standard_normal_vector(b.len(), rng);
    let lt = chol.l().transpose();
    let dev = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Parameter("singular Cholesky factor".into()))?;
    Ok(mean + dev)
}

/// Bayesian linear regression draw with heteroskedastic noise variances `w`
/// and independent zero-mean Gaussian priors with variances `prior_var`.
pub fn weighted_regression_draw<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &[f64],
    w: &[f64],
    prior_var: &[f64],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (q, b) = weighted_regression_system(design, response, w, prior_var);
    draw_from_precision(&q, &b, rng)
}

/// Posterior precision and shift of the weighted regression above.
pub fn weighted_regression_system(
    design: &DMatrix<f64>,
    response: &[f64],
    w: &[f64],
    prior_var: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let k = design.ncols();
    let mut scaled = design.clone();
    for (t, wt) in w.iter().enumerate() {
        let s = 1.0 / wt.sqrt();
        scaled.row_mut(t).scale_mut(s);
    }
    let mut q = scaled.transpose() * &scaled;
    for j in 0..k {
        q[(j, j)] += 1.0 / prior_var[j];
    }
    let wy = DVector::from_iterator(response.len(), response.iter().zip(w).map(|(y, wt)| y / wt));
    let b = design.transpose() * wy;
    (q, b)
}

/// Log density of `N(mean, cov)` at `x`.
pub fn log_mvn_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = robust_cholesky(cov)
        .ok_or_else(|| Error::Parameter("covariance is not positive definite".into()))?;
    let d = x - mean;
    let l = chol.l();
    let u = l
        .solve_lower_triangular(&d)
        .ok_or_else(|| Error::Parameter("singular covariance factor".into()))?;
    let log_det: f64 = l.diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let n = x.len() as f64;
    Ok(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + u.norm_squared()))
}
