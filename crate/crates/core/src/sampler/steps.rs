//! Conditional updates of the Gibbs sampler. Steps 1–10 act on one equation
//! given the error factors; Steps 11–12 and the factor-variance trees act on
//! the shared factor block.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{draw_from_precision, weighted_regression_draw};
use crate::model::{EquationState, FactorState, ModelConfig};
use crate::shrinkage::{sample_horseshoe, sample_process_variance};
use crate::tree::{bart_sweep, MoveProbs, MoveStats, SplitData, TreePrior, WeightedTarget};
use crate::vol::{heterobart_sweep, sample_idio_sv, FactorVolState, MixtureTable, SvPriors};

/// Observations whose loading-weighted regressor falls below this magnitude
/// carry no information about a TVP factor and are left out of its target.
pub const ZERO_INFORMATION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    /// Steps 1–2: TVP-factor trees and their terminal nodes, marginal of the TVPs.
    Trees,
    Loadings,
    Tvp,
    ProcessVariances,
    ConstantCoefficients,
    ErrorLoadings,
    HorseshoeA,
    HorseshoeLambda,
    IdioVol,
    Factors,
    FactorVol,
    HorseshoeGamma,
}

impl Step {
    pub fn label(self) -> &'static str {
        match self {
            Step::Trees => "TVP trees",
            Step::Loadings => "TVP loadings",
            Step::Tvp => "TVP paths",
            Step::ProcessVariances => "process variances",
            Step::ConstantCoefficients => "constant coefficients",
            Step::ErrorLoadings => "error-factor loadings",
            Step::HorseshoeA => "horseshoe (constant coefficients)",
            Step::HorseshoeLambda => "horseshoe (TVP loadings)",
            Step::IdioVol => "idiosyncratic volatility",
            Step::Factors => "error factors",
            Step::FactorVol => "factor volatility trees",
            Step::HorseshoeGamma => "horseshoe (error-factor loadings)",
        }
    }
}

/// Everything one equation's update conditions on besides its own state.
#[derive(Debug, Clone, Copy)]
pub struct EquationInputs<'a> {
    pub index: usize,
    /// Response `y_m` over the `T` usable periods.
    pub y: &'a [f64],
    pub x: &'a DMatrix<f64>,
    pub data: &'a SplitData,
    /// Error factors `q_t`, `T x Q_q`.
    pub q: &'a DMatrix<f64>,
    /// Prior variances of `gamma_m` (row `m` of each column's horseshoe block).
    pub gamma_prior_var: &'a [f64],
    pub config: &'a ModelConfig,
}

impl EquationInputs<'_> {
    fn periods(&self) -> usize {
        self.y.len()
    }

    fn x_dot(&self, t: usize, v: &[f64]) -> f64 {
        (0..self.x.ncols()).map(|j| self.x[(t, j)] * v[j]).sum()
    }

    fn q_dot(&self, t: usize, g: &DVector<f64>) -> f64 {
        (0..self.q.ncols()).map(|j| self.q[(t, j)] * g[j]).sum()
    }

    fn tree_prior(&self, nu: u32) -> TreePrior {
        TreePrior {
            alpha: self.config.alpha,
            zeta: self.config.zeta,
            nu,
            n_min: self.config.n_min,
        }
    }
}

fn row_dot(m: &DMatrix<f64>, t: usize, v: &[f64]) -> f64 {
    (0..m.ncols()).map(|j| m[(t, j)] * v[j]).sum()
}

fn row_of(m: &DMatrix<f64>, t: usize) -> Vec<f64> {
    m.row(t).iter().copied().collect()
}

/// `x_t' V_m x_t + sigma^2_mt`, the noise variance once the TVPs are integrated out.
fn marginal_noise(eq: &EquationState, inp: &EquationInputs, t: usize) -> f64 {
    let xv: f64 = (0..inp.x.ncols()).map(|j| inp.x[(t, j)].powi(2) * eq.v[j]).sum();
    xv + eq.sigma2(t)
}

/// `y_mt - x_t' a_m - q_t' gamma_m`.
fn tvp_response(eq: &EquationState, inp: &EquationInputs) -> Vec<f64> {
    let a = eq.a.as_slice();
    (0..inp.periods())
        .map(|t| inp.y[t] - inp.x_dot(t, a) - inp.q_dot(t, &eq.gamma))
        .collect()
}

/// Transformed regressand and noise variance fed to the trees of TVP factor
/// `j`: `(y*_t - sum_{i != j} xt_ti g_i(z_t)) / xt_tj` and
/// `(x_t' V x_t + sigma^2_t) / xt_tj^2`, with zero-information rows removed.
pub fn tvp_factor_target(
    eq: &EquationState,
    inp: &EquationInputs,
    fit: &DMatrix<f64>,
    j: usize,
) -> Result<WeightedTarget> {
    let xt = inp.x * &eq.lambda;
    let ystar = tvp_response(eq, inp);
    let (mut rows, mut u, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..inp.periods() {
        let d = xt[(t, j)];
        if d.abs() < ZERO_INFORMATION {
            continue;
        }
        let mut others = 0.0;
        for i in 0..fit.ncols() {
            if i != j {
                others += xt[(t, i)] * fit[(t, i)];
            }
        }
        rows.push(t);
        u.push((ystar[t] - others) / d);
        w.push(marginal_noise(eq, inp, t) / (d * d));
    }
    WeightedTarget::new(rows, u, w)
}

/// Steps 1–2: every TVP-factor ensemble is updated by backfitting on its
/// transformed target, outer loop over factors and inner loop over trees.
pub fn step1_trees_marginal<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    probs: &MoveProbs,
    rng: &mut R,
) -> Result<MoveStats> {
    let mut stats = MoveStats::default();
    let mut fit = eq.factor_fit(inp.data);
    for j in 0..eq.mean_trees.len() {
        let target = tvp_factor_target(eq, inp, &fit, j)?;
        let prior = inp.tree_prior((j + 1) as u32);
        let ens = &mut eq.mean_trees[j];
        if target.is_empty() {
            ens.draw_from_prior(inp.data, &prior, rng);
        } else {
            stats.merge(&bart_sweep(ens, &target, inp.data, &prior, probs, rng));
        }
        for (t, v) in ens.fit(inp.data).into_iter().enumerate() {
            fit[(t, j)] = v;
        }
    }
    Ok(stats)
}

/// Step 3: `vec(Lambda_m)` from the regression of `y*_t` on `F_m(z_t)' ⊗ x_t'`
/// with noise variance `x_t' V x_t + sigma^2_t`.
pub fn step3_loadings<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    rng: &mut R,
) -> Result<()> {
    let (k, qb) = (inp.x.ncols(), eq.tvp_factors());
    if qb == 0 {
        return Ok(());
    }
    let f = eq.factor_fit(inp.data);
    let n = inp.periods();
    let design = DMatrix::from_fn(n, k * qb, |t, c| inp.x[(t, c % k)] * f[(t, c / k)]);
    let w: Vec<f64> = (0..n).map(|t| marginal_noise(eq, inp, t)).collect();
    let prior: Vec<f64> = (0..k * qb).map(|c| eq.hs_lambda[c / k].prior_var(c % k)).collect();
    let draw = weighted_regression_draw(&design, &tvp_response(eq, inp), &w, &prior, rng)?;
    for c in 0..k * qb {
        eq.lambda[(c % k, c / k)] = draw[c];
    }
    Ok(())
}

/// Step 4: each `beta_mt` from `N(Lambda F(z_t), V_m)` updated by the single
/// observation `y_mt - x_t' a_m - q_t' gamma_m = x_t' beta_mt + e_mt`.
pub fn step4_tvp<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    rng: &mut R,
) -> Result<()> {
    let k = inp.x.ncols();
    let prior_mean = eq.tvp_prior_mean(inp.data);
    let resp = tvp_response(eq, inp);
    let sd: Vec<f64> = eq.v.iter().map(|v| v.sqrt()).collect();
    for t in 0..inp.periods() {
        let mut b = vec![0.0; k];
        for j in 0..k {
            let z: f64 = StandardNormal.sample(rng);
            b[j] = prior_mean[(t, j)] + sd[j] * z;
        }
        let s2 = eq.sigma2(t);
        let e: f64 = StandardNormal.sample(rng);
        let vx: Vec<f64> = (0..k).map(|j| eq.v[j] * inp.x[(t, j)]).collect();
        let denom = inp.x_dot(t, &vx) + s2;
        let gap = (resp[t] - inp.x_dot(t, &b) - s2.sqrt() * e) / denom;
        for j in 0..k {
            eq.beta[(t, j)] = b[j] + vx[j] * gap;
        }
    }
    Ok(())
}

/// Exact conditional moments of the Step-4 draw: per-period means (`T x K`)
/// and covariances `V - V x x' V / (x' V x + sigma^2)`.
pub fn tvp_conditional_moments(eq: &EquationState, inp: &EquationInputs) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let k = inp.x.ncols();
    let prior_mean = eq.tvp_prior_mean(inp.data);
    let resp = tvp_response(eq, inp);
    let mut means = DMatrix::zeros(inp.periods(), k);
    let mut covs = Vec::with_capacity(inp.periods());
    for t in 0..inp.periods() {
        let vx = DVector::from_fn(k, |j, _| eq.v[j] * inp.x[(t, j)]);
        let denom = inp.x_dot(t, vx.as_slice()) + eq.sigma2(t);
        let b0 = row_of(&prior_mean, t);
        let gap = (resp[t] - inp.x_dot(t, &b0)) / denom;
        for j in 0..k {
            means[(t, j)] = b0[j] + vx[j] * gap;
        }
        covs.push(DMatrix::from_diagonal(&eq.v) - &vx * vx.transpose() / denom);
    }
    (means, covs)
}

/// Step 5: each process variance from its GIG conditional given
/// `eta_j,t = beta_tj - [Lambda F(z_t)]_j`.
pub fn step5_process_vars<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    rng: &mut R,
) -> Result<()> {
    let prior_mean = eq.tvp_prior_mean(inp.data);
    for j in 0..inp.x.ncols() {
        let eta: Vec<f64> = (0..inp.periods()).map(|t| eq.beta[(t, j)] - prior_mean[(t, j)]).collect();
        eq.v[j] = sample_process_variance(&eta, inp.config.b_v, rng)?;
    }
    Ok(())
}

/// Step 6: `a_m` from the regression of `y_mt - x_t' beta_mt - q_t' gamma_m`
/// on `x_t` with variances `sigma^2_mt`.
pub fn step6_constant_coeffs<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    rng: &mut R,
) -> Result<()> {
    let n = inp.periods();
    let resp: Vec<f64> = (0..n)
        .map(|t| inp.y[t] - inp.x_dot(t, &row_of(&eq.beta, t)) - inp.q_dot(t, &eq.gamma))
        .collect();
    let w: Vec<f64> = (0..n).map(|t| eq.sigma2(t)).collect();
    eq.a = weighted_regression_draw(inp.x, &resp, &w, &eq.hs_a.prior_vars(), rng)?;
    Ok(())
}

/// Step 7: `gamma_m` from the regression of `y_mt - x_t'(a_m + beta_mt)` on `q_t`.
pub fn step7_gamma<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    rng: &mut R,
) -> Result<()> {
    let n = inp.periods();
    let a = eq.a.as_slice();
    let resp: Vec<f64> = (0..n)
        .map(|t| inp.y[t] - inp.x_dot(t, a) - row_dot(inp.x, t, &row_of(&eq.beta, t)))
        .collect();
    let w: Vec<f64> = (0..n).map(|t| eq.sigma2(t)).collect();
    eq.gamma = weighted_regression_draw(inp.q, &resp, &w, inp.gamma_prior_var, rng)?;
    Ok(())
}

/// Step 8: horseshoe scales of `a_m` (one global scale per equation).
pub fn step8_horseshoe_a<R: Rng + ?Sized>(eq: &mut EquationState, rng: &mut R) -> Result<()> {
    let a: Vec<f64> = eq.a.iter().copied().collect();
    sample_horseshoe(&mut eq.hs_a, &a, rng)
}

/// Step 9: horseshoe scales of `Lambda_m`, one global scale per column.
pub fn step9_horseshoe_lambda<R: Rng + ?Sized>(eq: &mut EquationState, rng: &mut R) -> Result<()> {
    for j in 0..eq.tvp_factors() {
        let col: Vec<f64> = eq.lambda.column(j).iter().copied().collect();
        sample_horseshoe(&mut eq.hs_lambda[j], &col, rng)?;
    }
    Ok(())
}

/// Step 10: idiosyncratic log-variances and their AR(1) parameters.
pub fn step10_idio_sv<R: Rng + ?Sized>(
    eq: &mut EquationState,
    inp: &EquationInputs,
    priors: &SvPriors,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<()> {
    let a = eq.a.as_slice();
    let resid: Vec<f64> = (0..inp.periods())
        .map(|t| {
            inp.y[t] - inp.x_dot(t, a) - inp.x_dot(t, &row_of(&eq.beta, t)) - inp.q_dot(t, &eq.gamma)
        })
        .collect();
    sample_idio_sv(&resid, &mut eq.sv, priors, table, rng)
}

/// Step 11: each `q_t` from `N(Vb Gh' yh_t, Vb)`, `Vb = (Gh'Gh + R_t^{-1})^{-1}`,
/// with `Gh = Sigma_t^{-1/2} Gamma` and `yh_t = Sigma_t^{-1/2}(y_t - (A + B_t) x_t)`.
pub fn step11_factors<R: Rng + ?Sized>(
    factor: &mut FactorState,
    residuals: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    log_sigma2: &DMatrix<f64>,
    log_r: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let (n, m) = residuals.shape();
    let qq = gamma.ncols();
    for t in 0..n {
        let mut prec = DMatrix::zeros(qq, qq);
        let mut b = DVector::zeros(qq);
        for i in 0..m {
            let inv = (-log_sigma2[(t, i)]).exp();
            for a in 0..qq {
                b[a] += gamma[(i, a)] * inv * residuals[(t, i)];
                for c in 0..qq {
                    prec[(a, c)] += gamma[(i, a)] * inv * gamma[(i, c)];
                }
            }
        }
        for a in 0..qq {
            prec[(a, a)] += (-log_r[(t, a)]).exp();
        }
        let draw = draw_from_precision(&prec, &b, rng)?;
        for a in 0..qq {
            factor.q[(t, a)] = draw[a];
        }
    }
    Ok(())
}

/// Variance trees of one error factor given its current draws `q`.
pub fn factor_vol_sweep<R: Rng + ?Sized>(
    vol: &mut FactorVolState,
    q: &[f64],
    data: &SplitData,
    config: &ModelConfig,
    probs: &MoveProbs,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<MoveStats> {
    let prior = TreePrior {
        alpha: config.alpha,
        zeta: config.zeta,
        nu: 1,
        n_min: config.n_min,
    };
    heterobart_sweep(vol, q, data, &prior, probs, table, rng)
}

/// Step 12: horseshoe scales of `Gamma`, one global scale per column.
pub fn step12_horseshoe_gamma<R: Rng + ?Sized>(
    factor: &mut FactorState,
    gamma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    for j in 0..gamma.ncols() {
        let col: Vec<f64> = gamma.column(j).iter().copied().collect();
        sample_horseshoe(&mut factor.hs_gamma[j], &col, rng)?;
    }
    Ok(())
}

pub(crate) fn numerical(step: Step, equation: Option<usize>, sweep: usize, err: Error) -> Error {
    match err {
        Error::Numerical { .. } => err,
        other => Error::Numerical {
            step: step.label(),
            equation,
            sweep,
            message: other.to_string(),
        },
    }
}
