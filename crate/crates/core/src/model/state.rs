use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DesignData, ModelConfig};
use crate::error::{Error, Result};
use crate::linalg::{log_mvn_density, weighted_regression_system};
use crate::shrinkage::HorseshoeBlock;
use crate::tree::{Ensemble, SplitData};
use crate::vol::{FactorVolState, SvState};

/// Parameters and latent states attached to one equation of the VAR.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationState {
    /// Constant coefficients `a_m` (length `K`).
    pub a: DVector<f64>,
    /// TVP paths `beta_mt`, `T x K`.
    pub beta: DMatrix<f64>,
    /// Loadings `Lambda_m`, `K x Q_beta`.
    pub lambda: DMatrix<f64>,
    /// Process innovation variances `v^2_mj` (length `K`).
    pub v: DVector<f64>,
    /// One ensemble per TVP factor; ensemble `q` uses factor index `q + 1`.
    pub mean_trees: Vec<Ensemble>,
    /// Row `m` of the error-factor loadings `Gamma`.
    pub gamma: DVector<f64>,
    pub hs_a: HorseshoeBlock,
    /// One block per column of `Lambda_m`.
    pub hs_lambda: Vec<HorseshoeBlock>,
    /// Idiosyncratic log-variance `log sigma^2_mt` and its AR(1) parameters.
    pub sv: SvState,
}

impl EquationState {
    pub fn tvp_factors(&self) -> usize {
        self.lambda.ncols()
    }

    /// `F_m(z_t)` for every row: `T x Q_beta`.
    pub fn factor_fit(&self, data: &SplitData) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(data.rows(), self.mean_trees.len());
        for (j, e) in self.mean_trees.iter().enumerate() {
            for (t, v) in e.fit(data).into_iter().enumerate() {
                f[(t, j)] = v;
            }
        }
        f
    }

    /// Prior means `Lambda_m F_m(z_t)` of the TVPs, `T x K`.
    pub fn tvp_prior_mean(&self, data: &SplitData) -> DMatrix<f64> {
        self.factor_fit(data) * self.lambda.transpose()
    }

    pub fn sigma2(&self, t: usize) -> f64 {
        self.sv.h[t].exp()
    }
}

/// Error factors and their tree-based log-variances.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    /// Factor draws `q_t`, `T x Q_q`.
    pub q: DMatrix<f64>,
    pub vol: Vec<FactorVolState>,
    /// One horseshoe block per column of `Gamma` (length `M` each).
    pub hs_gamma: Vec<HorseshoeBlock>,
}

impl FactorState {
    pub fn factors(&self) -> usize {
        self.q.ncols()
    }

    /// `log r_s(z_t)`, `T x Q_q`.
    pub fn log_variances(&self, data: &SplitData) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(data.rows(), self.vol.len());
        for (s, v) in self.vol.iter().enumerate() {
            for (t, x) in v.log_variance_path(data).into_iter().enumerate() {
                out[(t, s)] = x;
            }
        }
        out
    }
}

/// Full configuration of every parameter and latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub equations: Vec<EquationState>,
    pub factor: FactorState,
}

impl ModelState {
    /// Dispersed but numerically safe starting point: ridge constant
    /// coefficients, root-only trees, small random loadings, flat log-variances
    /// at the ridge residual variance.
    pub fn initialize<R: Rng + ?Sized>(
        design: &DesignData,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let t = design.periods();
        let m = design.variables();
        let k = design.regressors();
        let q_beta = if config.constant_coefficients { 0 } else { config.q_beta };
        let mut normal = |sd: f64| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        };
        let mut equations = Vec::with_capacity(m);
        for i in 0..m {
            let y: Vec<f64> = design.y.column(i).iter().copied().collect();
            let (prec, b) = weighted_regression_system(&design.x, &y, &vec![1.0; t], &vec![1.0; k]);
            let a = prec
                .cholesky()
                .ok_or_else(|| Error::Numerical {
                    step: "initialization",
                    equation: Some(i),
                    sweep: 0,
                    message: "ridge system is not positive definite".into(),
                })?
                .solve(&b);
            let resid = DVector::from_vec(y) - &design.x * &a;
            let var = (resid.norm_squared() / t as f64).max(1e-8);
            let mut mean_trees = Vec::with_capacity(q_beta);
            for j in 0..q_beta {
                mean_trees.push(Ensemble::new(config.s_beta, (j + 1) as u32, config.mean_prior_var())?);
            }
            equations.push(EquationState {
                a,
                beta: DMatrix::zeros(t, k),
                lambda: DMatrix::from_fn(k, q_beta, |_, _| normal(0.1)),
                v: DVector::from_element(k, if config.constant_coefficients { 0.0 } else { 0.01 }),
                mean_trees,
                gamma: DVector::from_fn(config.q_q, |_, _| normal(0.1)),
                hs_a: HorseshoeBlock::new(k),
                hs_lambda: (0..q_beta).map(|_| HorseshoeBlock::new(k)).collect(),
                sv: SvState::new(t, var.ln()),
            });
        }
        let vol = (0..config.q_q)
            .map(|_| FactorVolState::new(config.s_q, config.var_prior_var(), t))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelState {
            equations,
            factor: FactorState {
                q: DMatrix::zeros(t, config.q_q),
                vol,
                hs_gamma: (0..config.q_q).map(|_| HorseshoeBlock::new(m)).collect(),
            },
        })
    }

    pub fn variables(&self) -> usize {
        self.equations.len()
    }

    /// `Gamma`, `M x Q_q`.
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        let m = self.equations.len();
        let q = self.factor.factors();
        DMatrix::from_fn(m, q, |i, j| self.equations[i].gamma[j])
    }

    /// `log sigma^2_mt`, `T x M`.
    pub fn log_idio_variances(&self) -> DMatrix<f64> {
        let t = self.factor.q.nrows();
        DMatrix::from_fn(t, self.equations.len(), |r, c| self.equations[c].sv.h[r])
    }

    /// Conditional mean `(A + B_t) x_t` for every period, `T x M`.
    pub fn conditional_means(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let t = x.nrows();
        let mut out = DMatrix::zeros(t, self.equations.len());
        for (i, eq) in self.equations.iter().enumerate() {
            for r in 0..t {
                let mut s = 0.0;
                for j in 0..x.ncols() {
                    s += x[(r, j)] * (eq.a[j] + eq.beta[(r, j)]);
                }
                out[(r, i)] = s;
            }
        }
        out
    }

    /// Means `(a_m + Lambda_m F_m(z_t))' x_t` with the TVP innovations
    /// integrated out, `T x M`.
    pub fn marginal_means(&self, x: &DMatrix<f64>, data: &SplitData) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), self.equations.len());
        for (i, eq) in self.equations.iter().enumerate() {
            let prior = eq.tvp_prior_mean(data);
            for r in 0..x.nrows() {
                out[(r, i)] = (0..x.ncols()).map(|j| x[(r, j)] * (eq.a[j] + prior[(r, j)])).sum();
            }
        }
        out
    }

    /// `x_t' V_m x_t`, the variance the TVP innovations add to each response, `T x M`.
    pub fn tvp_variances(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.equations.len(), |r, i| {
            (0..x.ncols()).map(|j| x[(r, j)].powi(2) * self.equations[i].v[j]).sum()
        })
    }

    /// Per-period log-likelihood over the responses selected by `subset`
    /// (all when `None`), in the original units of the data. The error
    /// factors and the TVP innovations are integrated out:
    /// `y_t ~ N((a + Lambda F(z_t))' x_t, Gamma R_t Gamma' + Sigma_t + diag(x_t' V_m x_t))`.
    pub fn log_likelihood(
        &self,
        design: &DesignData,
        data: &SplitData,
        subset: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        let log_r = self.factor.log_variances(data);
        factor_model_loglik(
            design,
            &self.marginal_means(&design.x, data),
            &self.gamma_matrix(),
            &log_r,
            &self.log_idio_variances(),
            Some(&self.tvp_variances(&design.x)),
            subset,
        )
    }
}

/// Per-period Gaussian log-likelihood of the responses in `subset` under
/// means `T x M`, covariance `Gamma diag(exp(log_r_t)) Gamma' + diag(exp(log_sigma2_t))`
/// plus the optional diagonal `extra_var` (`T x M`), corrected by the Jacobian
/// of the response scaling.
pub fn factor_model_loglik(
    design: &DesignData,
    means: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    log_r: &DMatrix<f64>,
    log_sigma2: &DMatrix<f64>,
    extra_var: Option<&DMatrix<f64>>,
    subset: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let m = design.variables();
    let all: Vec<usize> = (0..m).collect();
    let idx = subset.unwrap_or(&all);
    if idx.is_empty() || idx.iter().any(|&i| i >= m) {
        return Err(Error::Dimension("log-likelihood subset is empty or out of range".into()));
    }
    let g_sub = gamma.select_rows(idx);
    let jacobian: f64 = idx.iter().map(|&i| design.unit(i).ln()).sum();
    let mut out = Vec::with_capacity(design.periods());
    for t in 0..design.periods() {
        let r = DVector::from_iterator(log_r.ncols(), log_r.row(t).iter().map(|v| v.exp()));
        let mut cov = &g_sub * DMatrix::from_diagonal(&r) * g_sub.transpose();
        for (a, &i) in idx.iter().enumerate() {
            cov[(a, a)] += log_sigma2[(t, i)].exp() + extra_var.map_or(0.0, |v| v[(t, i)]);
        }
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| design.y[(t, i)]));
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| means[(t, i)]));
        out.push(log_mvn_density(&y, &mu, &cov)? - jacobian);
    }
    Ok(out)
}
