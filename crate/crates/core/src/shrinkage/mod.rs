//! Horseshoe scale updates and the process-variance draw.

mod gig;

pub use gig::{sample_gig, GIG_SHAPE_FLOOR};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SCALE_MIN: f64 = 1e-150;
const SCALE_MAX: f64 = 1e150;

/// Draws from the inverse-Gamma with shape 1 and scale `b`, i.e. `b / E`
/// with `E` standard exponential.
pub fn inv_gamma_shape1<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    (b / e).clamp(SCALE_MIN, SCALE_MAX)
}

/// Local and global horseshoe scales for one block of coefficients, with the
/// auxiliary variables of the inverse-Gamma mixture representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeBlock {
    /// Local variances `rho_i^2`.
    pub local: Vec<f64>,
    /// Auxiliaries `r_i` of the local scales.
    pub local_aux: Vec<f64>,
    /// Global variance `varpi^2`.
    pub global: f64,
    /// Auxiliary `n` of the global scale.
    pub global_aux: f64,
}

impl HorseshoeBlock {
    pub fn new(n: usize) -> Self {
        HorseshoeBlock {
            local: vec![1.0; n],
            local_aux: vec![1.0; n],
            global: 1.0,
            global_aux: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    /// Prior variance `rho_i^2 varpi^2` of coefficient `i`.
    pub fn prior_var(&self, i: usize) -> f64 {
        (self.local[i] * self.global).clamp(1e-300, 1e300)
    }

    pub fn prior_vars(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.prior_var(i)).collect()
    }
}

/// `r | rho^2 ~ IG(1, 1 + 1 / rho^2)`.
pub fn draw_local_aux<R: Rng + ?Sized>(local: f64, rng: &mut R) -> f64 {
    inv_gamma_shape1(1.0 + 1.0 / local, rng)
}

/// `n | varpi^2 ~ IG(1, 1 + 1 / varpi^2)`.
pub fn draw_global_aux<R: Rng + ?Sized>(global: f64, rng: &mut R) -> f64 {
    inv_gamma_shape1(1.0 + 1.0 / global, rng)
}

/// `rho^2 | . ~ IG(1, 1 / r + a^2 / (2 varpi^2))`.
pub fn draw_local<R: Rng + ?Sized>(aux: f64, coeff: f64, global: f64, rng: &mut R) -> f64 {
    inv_gamma_shape1(1.0 / aux + coeff * coeff / (2.0 * global), rng)
}

/// `varpi^2 | . ~ IG((K + 1) / 2, 1 / n + sum(a_i^2 / rho_i^2) / 2)` for a
/// block of `K` coefficients.
pub fn draw_global<R: Rng + ?Sized>(aux: f64, coeffs: &[f64], local: &[f64], rng: &mut R) -> f64 {
    let ss: f64 = coeffs.iter().zip(local).map(|(a, l)| a * a / l).sum();
    let shape = 0.5 * (coeffs.len() as f64 + 1.0);
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    ((1.0 / aux + 0.5 * ss) / g).clamp(SCALE_MIN, SCALE_MAX)
}

/// One Gibbs pass over the block: auxiliaries first, then local and global
/// scales.
pub fn sample_horseshoe<R: Rng + ?Sized>(
    block: &mut HorseshoeBlock,
    coeffs: &[f64],
    rng: &mut R,
) -> Result<()> {
    if coeffs.len() != block.len() {
        return Err(Error::Dimension(format!(
            "horseshoe block has {} scales but {} coefficients",
            block.len(),
            coeffs.len()
        )));
    }
    for (aux, &l) in block.local_aux.iter_mut().zip(&block.local) {
        *aux = draw_local_aux(l, rng);
    }
    block.global_aux = draw_global_aux(block.global, rng);
    for i in 0..coeffs.len() {
        block.local[i] = draw_local(block.local_aux[i], coeffs[i], block.global, rng);
    }
    block.global = draw_global(block.global_aux, coeffs, &block.local, rng);
    Ok(())
}

/// Parameters `(lambda, chi, psi)` of the process-variance conditional under
/// the prior `v^2 ~ Gamma(1/2, rate 1/(2 B_v))`: `lambda = 1/2 - T/2`,
/// `chi = sum eta^2`, `psi = 1 / B_v` (so that the rate on `v^2` is `1/(2 B_v)`).
pub fn process_variance_params(eta: &[f64], b_v: f64) -> (f64, f64, f64) {
    let t = eta.len() as f64;
    let ss: f64 = eta.iter().map(|e| e * e).sum();
    (0.5 - 0.5 * t, ss, 1.0 / b_v)
}

pub fn sample_process_variance<R: Rng + ?Sized>(eta: &[f64], b_v: f64, rng: &mut R) -> Result<f64> {
    if eta.is_empty() {
        return Err(Error::Dimension("process variance needs at least one innovation".into()));
    }
    if !(b_v > 0.0) {
        return Err(Error::Parameter(format!("B_v must be positive, got {b_v}")));
    }
    let (lambda, chi, psi) = process_variance_params(eta, b_v);
    sample_gig(lambda, chi, psi, rng)
}
