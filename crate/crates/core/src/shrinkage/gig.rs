//! Generalized inverse Gaussian variates with density proportional to
//! `x^(lambda - 1) exp(-(chi / x + psi x) / 2)`.
//!
//! The general case uses the ratio-of-uniforms methods of Hörmann and
//! Leydold (2014) on the standardized two-parameter form; `chi = 0` and
//! `psi = 0` fall back to Gamma and inverse-Gamma draws.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Shape floor used when `chi = 0` leaves a non-positive Gamma shape.
pub const GIG_SHAPE_FLOOR: f64 = 1e-8;

fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Parameter(format!("Gamma({shape}, rate {rate}): {e}")))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, rng: &mut R) -> Result<f64> {
    if !(lambda.is_finite() && chi.is_finite() && psi.is_finite()) {
        return Err(Error::Parameter(format!(
            "GIG parameters must be finite, got ({lambda}, {chi}, {psi})"
        )));
    }
    if chi < 0.0 || psi < 0.0 {
        return Err(Error::Parameter(format!(
            "GIG requires chi >= 0 and psi >= 0, got chi = {chi}, psi = {psi}"
        )));
    }
    if chi == 0.0 && psi == 0.0 {
        return Err(Error::Parameter("GIG with chi = psi = 0 is improper".into()));
    }
    if chi == 0.0 {
        return gamma_rate(lambda.max(GIG_SHAPE_FLOOR), psi / 2.0, rng);
    }
    if psi == 0.0 {
        if lambda >= 0.0 {
            return Err(Error::Parameter(format!(
                "GIG with psi = 0 needs lambda < 0, got {lambda}"
            )));
        }
        let g = gamma_rate(-lambda, chi / 2.0, rng)?;
        return Ok((1.0 / g).min(f64::MAX));
    }
    let omega = (chi * psi).sqrt();
    let alpha = (chi / psi).sqrt();
    let lam = lambda.abs();
    let y = if omega < 1e-6 && lam >= 0.5 {
        // chi / x is negligible against psi x over the bulk of the mass
        gamma_rate(lam, omega / 2.0, rng)?
    } else if lam > 2.0 || omega > 3.0 {
        rou_shift(lam, omega, rng)
    } else if lam >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lam, omega, rng)
    } else {
        new_approach(lam, omega, rng)
    };
    let x = if lambda < 0.0 { alpha / y } else { alpha * y };
    Ok(x.clamp(f64::MIN_POSITIVE, f64::MAX))
}

fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u / v;
        if x > 0.0 && x.is_finite() && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    // roots of the cubic bounding the shifted region
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        let x = u / v + xm;
        if x > 0.0 && x.is_finite() && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn new_approach<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        let u = rng.random::<f64>() * hx;
        if x > 0.0
            && x.is_finite()
            && u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x)
        {
            return x;
        }
    }
}
