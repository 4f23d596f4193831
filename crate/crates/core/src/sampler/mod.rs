//! The full Gibbs sampler: per-equation Steps 1–10 run concurrently on
//! deterministic random substreams, followed by the shared factor block.

pub mod steps;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{factor_model_loglik, prepare_design, validate_config, Dataset, DesignData, ModelConfig, ModelState};
use crate::tree::{Ensemble, MoveProbs, MoveStats, SplitData};
use crate::vol::{MixtureTable, SvPriors};

pub use steps::{EquationInputs, Step};
use steps::*;

const TAG_INIT: u64 = 1;
const TAG_EQUATION: u64 = 2;
const TAG_FACTORS: u64 = 3;
const TAG_FACTOR_VOL: u64 = 4;
const TAG_GAMMA_HS: u64 = 5;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for a logical (sweep, block, index) position, so
/// results do not depend on how work is scheduled across threads.
pub fn substream(seed: u64, sweep: usize, tag: u64, index: usize) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for v in [sweep as u64, tag, index as u64] {
        h = splitmix(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Snapshot of one retained sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedDraw {
    pub sweep: usize,
    /// Constant coefficients, `M x K`.
    pub a: DMatrix<f64>,
    /// TVP paths per equation, each `T x K`.
    pub beta: Vec<DMatrix<f64>>,
    /// TVP loadings per equation, each `K x Q_beta`.
    pub lambda: Vec<DMatrix<f64>>,
    /// Process variances, `M x K`.
    pub v: DMatrix<f64>,
    pub mean_trees: Vec<Vec<Ensemble>>,
    /// Error-factor loadings, `M x Q_q`.
    pub gamma: DMatrix<f64>,
    /// Error factors, `T x Q_q`.
    pub q: DMatrix<f64>,
    /// Factor log-variances `log r_t`, `T x Q_q`.
    pub log_r: DMatrix<f64>,
    /// Idiosyncratic log-variances, `T x M`.
    pub log_sigma2: DMatrix<f64>,
    /// Per-equation `(mu, phi, sigma2)` of the log-variance process, `M x 3`.
    pub sv_params: DMatrix<f64>,
}

impl RetainedDraw {
    pub fn from_state(state: &ModelState, sweep: usize, log_r: DMatrix<f64>) -> Self {
        let m = state.equations.len();
        let k = state.equations.first().map_or(0, |e| e.a.len());
        RetainedDraw {
            sweep,
            a: DMatrix::from_fn(m, k, |i, j| state.equations[i].a[j]),
            beta: state.equations.iter().map(|e| e.beta.clone()).collect(),
            lambda: state.equations.iter().map(|e| e.lambda.clone()).collect(),
            v: DMatrix::from_fn(m, k, |i, j| state.equations[i].v[j]),
            mean_trees: state.equations.iter().map(|e| e.mean_trees.clone()).collect(),
            gamma: state.gamma_matrix(),
            q: state.factor.q.clone(),
            log_r,
            log_sigma2: state.log_idio_variances(),
            sv_params: DMatrix::from_fn(m, 3, |i, c| {
                let sv = &state.equations[i].sv;
                [sv.mu, sv.phi, sv.sigma2][c]
            }),
        }
    }

    pub fn variables(&self) -> usize {
        self.a.nrows()
    }

    pub fn periods(&self) -> usize {
        self.q.nrows()
    }

    /// Coefficients `a_m + beta_mt` of equation `m` at period `t`.
    pub fn coefficients(&self, m: usize, t: usize) -> Vec<f64> {
        (0..self.a.ncols()).map(|j| self.a[(m, j)] + self.beta[m][(t, j)]).collect()
    }

    pub fn conditional_means(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.variables(), |t, m| {
            self.coefficients(m, t).iter().enumerate().map(|(j, c)| c * x[(t, j)]).sum()
        })
    }

    /// Means `(a_m + Lambda_m F_m(z_t))' x_t` with the TVP innovations integrated out.
    pub fn marginal_means(&self, design: &DesignData) -> DMatrix<f64> {
        let data = SplitData::new(&design.z);
        let x = &design.x;
        let mut out = DMatrix::zeros(x.nrows(), self.variables());
        for m in 0..self.variables() {
            let mut f = DMatrix::zeros(x.nrows(), self.mean_trees[m].len());
            for (j, e) in self.mean_trees[m].iter().enumerate() {
                for (t, v) in e.fit(&data).into_iter().enumerate() {
                    f[(t, j)] = v;
                }
            }
            let prior = f * self.lambda[m].transpose();
            for t in 0..x.nrows() {
                out[(t, m)] = (0..x.ncols()).map(|j| x[(t, j)] * (self.a[(m, j)] + prior[(t, j)])).sum();
            }
        }
        out
    }

    /// Pointwise log-likelihood with the error factors and TVP innovations
    /// integrated out; see [`ModelState::log_likelihood`].
    pub fn log_likelihood(&self, design: &DesignData, subset: Option<&[usize]>) -> Result<Vec<f64>> {
        let x = &design.x;
        let tvp_var = DMatrix::from_fn(x.nrows(), self.variables(), |t, m| {
            (0..x.ncols()).map(|j| x[(t, j)].powi(2) * self.v[(m, j)]).sum()
        });
        factor_model_loglik(
            design,
            &self.marginal_means(design),
            &self.gamma,
            &self.log_r,
            &self.log_sigma2,
            Some(&tvp_var),
            subset,
        )
    }
}

/// Retained draws, per-draw log-likelihoods and move diagnostics of one run.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub config: ModelConfig,
    pub design: DesignData,
    pub draws: Vec<RetainedDraw>,
    /// `log p(y_t | Theta^(s))`, retained draws by periods.
    pub loglik: DMatrix<f64>,
    pub tree_stats: MoveStats,
    pub vol_stats: MoveStats,
}

/// Outcome of one sweep: the executed step sequence (equation index, step)
/// and tree-move counts.
#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub steps: Vec<(Option<usize>, Step)>,
    pub tree_stats: MoveStats,
    pub vol_stats: MoveStats,
}

pub struct Sampler {
    pub config: ModelConfig,
    pub design: DesignData,
    pub data: SplitData,
    pub state: ModelState,
    pub table: MixtureTable,
    pub sv_priors: SvPriors,
    pub probs: MoveProbs,
    sweep: usize,
}

impl Sampler {
    pub fn new(config: ModelConfig, design: DesignData) -> Result<Self> {
        let config = validate_config(config)?;
        let mut rng = substream(config.seed, 0, TAG_INIT, 0);
        let state = ModelState::initialize(&design, &config, &mut rng)?;
        Ok(Self::with_state(config, design, state))
    }

    pub fn with_state(config: ModelConfig, design: DesignData, state: ModelState) -> Self {
        let data = SplitData::new(&design.z);
        Sampler {
            config,
            design,
            data,
            state,
            table: MixtureTable::omori(),
            sv_priors: SvPriors::default(),
            probs: MoveProbs::default(),
            sweep: 0,
        }
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    /// Runs one full sweep of the sampler.
    pub fn sweep(&mut self) -> Result<SweepReport> {
        let sweep = self.sweep;
        let config = &self.config;
        let design = &self.design;
        let data = &self.data;
        let table = &self.table;
        let sv_priors = &self.sv_priors;
        let probs = &self.probs;
        let factor = &self.state.factor;
        let per_eq: Vec<Result<(MoveStats, Vec<Step>)>> = self
            .state
            .equations
            .par_iter_mut()
            .enumerate()
            .map(|(m, eq)| {
                let y: Vec<f64> = design.y.column(m).iter().copied().collect();
                let gamma_prior_var: Vec<f64> = factor.hs_gamma.iter().map(|b| b.prior_var(m)).collect();
                let inp = EquationInputs {
                    index: m,
                    y: &y,
                    x: &design.x,
                    data,
                    q: &factor.q,
                    gamma_prior_var: &gamma_prior_var,
                    config,
                };
                let mut rng = substream(config.seed, sweep, TAG_EQUATION, m);
                update_equation(eq, &inp, probs, sv_priors, table, sweep, &mut rng)
            })
            .collect();
        let mut report = SweepReport::default();
        for (m, r) in per_eq.into_iter().enumerate() {
            let (stats, steps) = r?;
            report.tree_stats.merge(&stats);
            report.steps.extend(steps.into_iter().map(|s| (Some(m), s)));
        }

        // shared factor block
        let log_r = self.state.factor.log_variances(data);
        let means = self.state.conditional_means(&design.x);
        let residuals = &design.y - means;
        let gamma = self.state.gamma_matrix();
        let log_sigma2 = self.state.log_idio_variances();
        let mut rng = substream(config.seed, sweep, TAG_FACTORS, 0);
        step11_factors(&mut self.state.factor, &residuals, &gamma, &log_sigma2, &log_r, &mut rng)
            .map_err(|e| numerical(Step::Factors, None, sweep, e))?;
        report.steps.push((None, Step::Factors));

        let factor = &mut self.state.factor;
        let q = &factor.q;
        let vol_stats: Vec<Result<MoveStats>> = factor
            .vol
            .par_iter_mut()
            .enumerate()
            .map(|(s, vol)| {
                let qs: Vec<f64> = q.column(s).iter().copied().collect();
                let mut rng = substream(config.seed, sweep, TAG_FACTOR_VOL, s);
                factor_vol_sweep(vol, &qs, data, config, probs, table, &mut rng)
            })
            .collect();
        for r in vol_stats {
            report.vol_stats.merge(&r.map_err(|e| numerical(Step::FactorVol, None, sweep, e))?);
        }
        report.steps.push((None, Step::FactorVol));

        let mut rng = substream(config.seed, sweep, TAG_GAMMA_HS, 0);
        step12_horseshoe_gamma(&mut self.state.factor, &gamma, &mut rng)
            .map_err(|e| numerical(Step::HorseshoeGamma, None, sweep, e))?;
        report.steps.push((None, Step::HorseshoeGamma));

        self.sweep += 1;
        Ok(report)
    }

    /// Runs the configured number of sweeps, retaining post-burn-in draws
    /// every `thin` sweeps together with their per-period log-likelihoods.
    pub fn run(mut self) -> Result<PosteriorDraws> {
        self.run_with(|_, _| {})
    }

    /// As [`Sampler::run`], calling `progress(sweep, report)` after every sweep.
    pub fn run_with(&mut self, mut progress: impl FnMut(usize, &SweepReport)) -> Result<PosteriorDraws> {
        let retained = self.config.retained();
        let mut draws = Vec::with_capacity(retained);
        let mut loglik = DMatrix::zeros(retained, self.design.periods());
        let mut tree_stats = MoveStats::default();
        let mut vol_stats = MoveStats::default();
        while self.sweep < self.config.n_draws {
            let sweep = self.sweep;
            let report = self.sweep()?;
            tree_stats.merge(&report.tree_stats);
            vol_stats.merge(&report.vol_stats);
            if self.config.is_retained(sweep) {
                let log_r = self.state.factor.log_variances(&self.data);
                let draw = RetainedDraw::from_state(&self.state, sweep, log_r);
                let ll = draw.log_likelihood(&self.design, None).map_err(|e| Error::Numerical {
                    step: "log-likelihood",
                    equation: None,
                    sweep,
                    message: e.to_string(),
                })?;
                let row = draws.len();
                for (t, v) in ll.into_iter().enumerate() {
                    loglik[(row, t)] = v;
                }
                draws.push(draw);
            }
            progress(sweep, &report);
        }
        Ok(PosteriorDraws {
            config: self.config.clone(),
            design: self.design.clone(),
            draws,
            loglik,
            tree_stats,
            vol_stats,
        })
    }
}

/// Steps 1–10 for one equation in their fixed order.
pub fn update_equation<R: rand::Rng + ?Sized>(
    eq: &mut crate::model::EquationState,
    inp: &EquationInputs,
    probs: &MoveProbs,
    sv_priors: &SvPriors,
    table: &MixtureTable,
    sweep: usize,
    rng: &mut R,
) -> Result<(MoveStats, Vec<Step>)> {
    let m = Some(inp.index);
    let wrap = |s: Step| move |e: Error| numerical(s, m, sweep, e);
    let mut steps = Vec::with_capacity(10);
    let mut stats = MoveStats::default();
    let tvp = !inp.config.constant_coefficients && eq.tvp_factors() > 0;
    if tvp {
        stats = step1_trees_marginal(eq, inp, probs, rng).map_err(wrap(Step::Trees))?;
        steps.push(Step::Trees);
        step3_loadings(eq, inp, rng).map_err(wrap(Step::Loadings))?;
        steps.push(Step::Loadings);
    }
    if !inp.config.constant_coefficients {
        step4_tvp(eq, inp, rng).map_err(wrap(Step::Tvp))?;
        steps.push(Step::Tvp);
        step5_process_vars(eq, inp, rng).map_err(wrap(Step::ProcessVariances))?;
        steps.push(Step::ProcessVariances);
    }
    step6_constant_coeffs(eq, inp, rng).map_err(wrap(Step::ConstantCoefficients))?;
    steps.push(Step::ConstantCoefficients);
    step7_gamma(eq, inp, rng).map_err(wrap(Step::ErrorLoadings))?;
    steps.push(Step::ErrorLoadings);
    step8_horseshoe_a(eq, rng).map_err(wrap(Step::HorseshoeA))?;
    steps.push(Step::HorseshoeA);
    if tvp {
        step9_horseshoe_lambda(eq, rng).map_err(wrap(Step::HorseshoeLambda))?;
        steps.push(Step::HorseshoeLambda);
    }
    step10_idio_sv(eq, inp, sv_priors, table, rng).map_err(wrap(Step::IdioVol))?;
    steps.push(Step::IdioVol);
    Ok((stats, steps))
}

/// Prepares the design (lags and scaling) and runs the sampler.
pub fn run_mcmc(config: ModelConfig, dataset: &Dataset) -> Result<PosteriorDraws> {
    let config = validate_config(config)?;
    let design = prepare_design(dataset, &config)?;
    Sampler::new(config, design)?.run()
}

/// Runs the sampler on an already assembled design.
pub fn run_mcmc_design(config: ModelConfig, design: DesignData) -> Result<PosteriorDraws> {
    Sampler::new(config, design)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl From<&MoveStats> for AcceptanceSummary {
    fn from(s: &MoveStats) -> Self {
        use crate::tree::Move;
        AcceptanceSummary {
            grow: s.acceptance_rate(Move::Grow),
            prune: s.acceptance_rate(Move::Prune),
            change: s.acceptance_rate(Move::Change),
            swap: s.acceptance_rate(Move::Swap),
        }
    }
}
