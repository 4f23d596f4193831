mod support;

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use support::{batch_se, mean, pooled_uniform_scores, report, rmse, var, MomentCheck};
use tvpbart::io::{simulate_dgp, simulate_toy_phillips, toy_phillips_design, DgpSpec, ToyLaw};
use tvpbart::model::{build_design, prepare_design, DesignData, EquationState, ModelConfig, ModelState};
use tvpbart::sampler::steps::{
    factor_vol_sweep, step11_factors, step3_loadings, step4_tvp, step5_process_vars, step6_constant_coeffs,
    step7_gamma, tvp_conditional_moments,
};
use tvpbart::sampler::{EquationInputs, PosteriorDraws, Sampler};
use tvpbart::shrinkage::{draw_global, draw_global_aux, draw_local, draw_local_aux, HorseshoeBlock};
use tvpbart::structural::{identify_bc_shock, irf_with, waic};
use tvpbart::tree::{bart_sweep, Ensemble, MoveProbs, SplitData, Tree, TreePrior, WeightedTarget};
use tvpbart::vol::{sample_idio_sv, FactorVolState, MixtureTable, SvPriors, SvState};

/// Heavy criteria run one at a time so their wall-clock budgets are honest.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn inv_gamma(shape: f64, scale: f64, rng: &mut ChaCha8Rng) -> f64 {
    scale / Gamma::new(shape, 1.0).unwrap().sample(rng)
}

// ---------------------------------------------------------------------------
// 10: mixture table

#[test]
fn c10_mixture_table_moments() {
    let t = MixtureTable::omori();
    let m: f64 = (0..t.len()).map(|i| t.weights[i] * t.means[i]).sum();
    let second: f64 = (0..t.len()).map(|i| t.weights[i] * (t.variances[i] + t.means[i].powi(2))).sum();
    let v = second - m * m;
    let pass = (m + 1.2704).abs() < 0.05 && (v - 4.9348).abs() < 0.1;
    report(
        10,
        "mixture-table moments",
        pass,
        &format!("mean {m:.4} (target -1.2704), variance {v:.4} (target 4.9348)"),
    );
    assert!(pass);
    assert!((t.mean() - m).abs() < 1e-12 && (t.variance() - v).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// shared frozen instance for the conjugacy checks

struct Frozen {
    design: DesignData,
    config: ModelConfig,
    state: ModelState,
}

/// M = 2 VAR(1) with intercept on T usable periods, every block set to a
/// fixed, non-default value.
fn frozen_instance(periods: usize, q_beta: usize, q_q: usize, seed: u64) -> Frozen {
    let spec: DgpSpec = serde_json::from_str(&format!(
        r#"{{"periods": {periods}, "lags": 1,
        "coefficients": [[0.2, 0.5, 0.1], [-0.1, 0.2, 0.3]],
        "modifiers": [{{"law": "trend"}}],
        "gamma": [[1.0], [0.5]],
        "factor_variance": [{{"law": "constant", "log_var": 0.0}}],
        "idio_variance": [{{"law": "constant", "log_var": -1.0}}, {{"law": "constant", "log_var": -0.5}}]}}"#
    ))
    .unwrap();
    let sim = simulate_dgp(&spec, seed).unwrap();
    let design = build_design(&sim.dataset, 1, true).unwrap();
    let config = ModelConfig {
        lags: 1,
        q_beta,
        q_q,
        s_beta: 1,
        s_q: 1,
        n_min: 2,
        scale_data: false,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let mut state = ModelState::initialize(&design, &config, &mut rng).unwrap();
    let (t, k) = (design.periods(), design.regressors());
    let threshold = (t / 2) as f64;
    let block = |n: usize, rng: &mut ChaCha8Rng| HorseshoeBlock {
        local: (0..n).map(|_| 0.2 + rng.random::<f64>()).collect(),
        local_aux: (0..n).map(|_| 0.5 + rng.random::<f64>()).collect(),
        global: 0.3 + rng.random::<f64>(),
        global_aux: 0.5 + rng.random::<f64>(),
    };
    for eq in state.equations.iter_mut() {
        eq.a = DVector::from_fn(k, |_, _| 0.3 * normal(&mut rng));
        eq.lambda = DMatrix::from_fn(k, q_beta, |_, _| 0.3 * normal(&mut rng));
        eq.v = DVector::from_fn(k, |_, _| 0.01 + 0.05 * rng.random::<f64>());
        eq.beta = DMatrix::from_fn(t, k, |_, _| 0.2 * normal(&mut rng));
        eq.gamma = DVector::from_fn(q_q, |_, _| normal(&mut rng));
        for (j, ens) in eq.mean_trees.iter_mut().enumerate() {
            let mut tree = Tree::constant(0.0);
            tree.grow(0, 0, threshold - j as f64);
            let leaves = tree.leaves();
            tree.set_leaf_value(leaves[0], 0.5 + 0.3 * j as f64);
            tree.set_leaf_value(leaves[1], -0.8 + 0.2 * j as f64);
            ens.trees[0] = tree;
        }
        eq.hs_a = block(k, &mut rng);
        eq.hs_lambda = (0..q_beta).map(|_| block(k, &mut rng)).collect();
        for h in eq.sv.h.iter_mut() {
            *h = -1.0 + 0.5 * normal(&mut rng);
        }
    }
    state.factor.q = DMatrix::from_fn(t, q_q, |_, _| normal(&mut rng));
    state.factor.hs_gamma = (0..q_q).map(|_| block(2, &mut rng)).collect();
    Frozen { design, config, state }
}

/// Hand-computed `F(z_t)` of the single-split trees set by `frozen_instance`.
fn hand_factor(eq: &EquationState, z: f64, j: usize) -> f64 {
    let tree = &eq.mean_trees[j].trees[0];
    let (_, thr) = tree.rule(0).unwrap();
    let leaves = tree.leaves();
    let leaf = if z <= thr { leaves[0] } else { leaves[1] };
    tree.leaf_value(leaf).unwrap()
}

fn dot(x: &DMatrix<f64>, t: usize, v: &[f64]) -> f64 {
    (0..x.ncols()).map(|j| x[(t, j)] * v[j]).sum()
}

struct Tally {
    checks: usize,
    worst: f64,
    worst_at: String,
}

impl Tally {
    fn new() -> Self {
        Tally {
            checks: 0,
            worst: 0.0,
            worst_at: String::new(),
        }
    }

    fn add(&mut self, label: &str, c: MomentCheck) {
        self.checks += 2;
        if c.worst() > self.worst {
            self.worst = c.worst();
            self.worst_at = label.to_string();
        }
    }
}

// ---------------------------------------------------------------------------
// 1: conditional conjugacy

#[test]
fn c01_conditional_conjugacy() {
    let _g = serial();
    let start = Instant::now();
    const N: usize = 50_000;
    let f = frozen_instance(10, 2, 2, 11);
    let (t, k) = (f.design.periods(), f.design.regressors());
    assert_eq!((t, k, f.design.variables()), (10, 3, 2));
    let data = SplitData::new(&f.design.z);
    let z: Vec<f64> = f.design.z.column(0).iter().copied().collect();
    let x = &f.design.x;
    let m = 0;
    let eq0 = f.state.equations[m].clone();
    let y: Vec<f64> = f.design.y.column(m).iter().copied().collect();
    let gpv: Vec<f64> = f.state.factor.hs_gamma.iter().map(|b| b.local[m] * b.global).collect();
    let inp = EquationInputs {
        index: m,
        y: &y,
        x,
        data: &data,
        q: &f.state.factor.q,
        gamma_prior_var: &gpv,
        config: &f.config,
    };
    let sigma2: Vec<f64> = eq0.sv.h.iter().map(|h| h.exp()).collect();
    let qg: Vec<f64> = (0..t).map(|s| dot(&f.state.factor.q, s, eq0.gamma.as_slice())).collect();
    let mut tally = Tally::new();

    // Step 3: loadings, TVPs integrated out
    {
        let qb = eq0.lambda.ncols();
        let d = DMatrix::from_fn(t, k * qb, |s, c| x[(s, c % k)] * hand_factor(&eq0, z[s], c / k));
        let r: Vec<f64> = (0..t).map(|s| y[s] - dot(x, s, eq0.a.as_slice()) - qg[s]).collect();
        let w: Vec<f64> = (0..t)
            .map(|s| (0..k).map(|j| x[(s, j)].powi(2) * eq0.v[j]).sum::<f64>() + sigma2[s])
            .collect();
        let prior: Vec<f64> = (0..k * qb)
            .map(|c| eq0.hs_lambda[c / k].local[c % k] * eq0.hs_lambda[c / k].global)
            .collect();
        let (mu, cov) = support::gaussian_regression(&d, &r, &w, &prior);
        let mut eq = eq0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cols = vec![Vec::with_capacity(N); k * qb];
        for _ in 0..N {
            step3_loadings(&mut eq, &inp, &mut rng).unwrap();
            for c in 0..k * qb {
                cols[c].push(eq.lambda[(c % k, c / k)]);
            }
        }
        for c in 0..k * qb {
            tally.add(&format!("step 3 coord {c}"), MomentCheck::gaussian(&cols[c], mu[c], cov[(c, c)]));
        }
    }

    // Step 4: TVPs, period by period
    {
        let mut eq = eq0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cols = vec![Vec::with_capacity(N); t * k];
        for _ in 0..N {
            step4_tvp(&mut eq, &inp, &mut rng).unwrap();
            for s in 0..t {
                for j in 0..k {
                    cols[s * k + j].push(eq.beta[(s, j)]);
                }
            }
        }
        for s in 0..t {
            let prior_mean: Vec<f64> = (0..k)
                .map(|j| (0..eq0.lambda.ncols()).map(|q| eq0.lambda[(j, q)] * hand_factor(&eq0, z[s], q)).sum())
                .collect();
            let vinv = DMatrix::from_diagonal(&eq0.v.map(|v| 1.0 / v));
            let xt = DVector::from_fn(k, |j, _| x[(s, j)]);
            let prec = &vinv + &xt * xt.transpose() / sigma2[s];
            let cov = prec.try_inverse().unwrap();
            let r = y[s] - dot(x, s, eq0.a.as_slice()) - qg[s];
            let mu = &cov * (&vinv * DVector::from_vec(prior_mean) + &xt * (r / sigma2[s]));
            for j in 0..k {
                tally.add(
                    &format!("step 4 beta[{s},{j}]"),
                    MomentCheck::gaussian(&cols[s * k + j], mu[j], cov[(j, j)]),
                );
            }
        }
    }

    // Step 5: process variances against quadrature of prior x likelihood
    {
        let mut eq = eq0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cols = vec![Vec::with_capacity(N); k];
        for _ in 0..N {
            step5_process_vars(&mut eq, &inp, &mut rng).unwrap();
            for j in 0..k {
                cols[j].push(eq.v[j]);
            }
        }
        for j in 0..k {
            let eta: Vec<f64> = (0..t)
                .map(|s| {
                    let pm: f64 =
                        (0..eq0.lambda.ncols()).map(|q| eq0.lambda[(j, q)] * hand_factor(&eq0, z[s], q)).sum();
                    eq0.beta[(s, j)] - pm
                })
                .collect();
            let b_v = f.config.b_v;
            // Gamma(1/2, rate 1/(2 b_v)) prior on v, Gaussian innovations with variance v
            let log_post = |v: f64| {
                -0.5 * v.ln() - v / (2.0 * b_v)
                    + eta.iter().map(|e| -0.5 * v.ln() - e * e / (2.0 * v)).sum::<f64>()
            };
            let (mu, var, m4) = quadrature_moments(log_post);
            tally.add(&format!("step 5 v[{j}]"), MomentCheck::new(&cols[j], mu, var, m4));
        }
    }

    // Step 6: constant coefficients
    {
        let r: Vec<f64> = (0..t)
            .map(|s| {
                let b: Vec<f64> = eq0.beta.row(s).iter().copied().collect();
                y[s] - dot(x, s, &b) - qg[s]
            })
            .collect();
        let prior: Vec<f64> = (0..k).map(|j| eq0.hs_a.local[j] * eq0.hs_a.global).collect();
        let (mu, cov) = support::gaussian_regression(x, &r, &sigma2, &prior);
        let mut eq = eq0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cols = vec![Vec::with_capacity(N); k];
        for _ in 0..N {
            step6_constant_coeffs(&mut eq, &inp, &mut rng).unwrap();
            for j in 0..k {
                cols[j].push(eq.a[j]);
            }
        }
        for j in 0..k {
            tally.add(&format!("step 6 a[{j}]"), MomentCheck::gaussian(&cols[j], mu[j], cov[(j, j)]));
        }
    }

    // Step 7: error-factor loadings
    {
        let qq = f.state.factor.q.ncols();
        let r: Vec<f64> = (0..t)
            .map(|s| {
                let c: Vec<f64> = (0..k).map(|j| eq0.a[j] + eq0.beta[(s, j)]).collect();
                y[s] - dot(x, s, &c)
            })
            .collect();
        let (mu, cov) = support::gaussian_regression(&f.state.factor.q, &r, &sigma2, &gpv);
        let mut eq = eq0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cols = vec![Vec::with_capacity(N); qq];
        for _ in 0..N {
            step7_gamma(&mut eq, &inp, &mut rng).unwrap();
            for j in 0..qq {
                cols[j].push(eq.gamma[j]);
            }
        }
        for j in 0..qq {
            tally.add(&format!("step 7 gamma[{j}]"), MomentCheck::gaussian(&cols[j], mu[j], cov[(j, j)]));
        }
    }

    // Step 8: each horseshoe conditional with its conditioning set frozen;
    // reciprocals of the variances are Gamma(shape, rate).
    {
        let hs = &eq0.hs_a;
        let a: Vec<f64> = eq0.a.iter().copied().collect();
        let gamma_check = |xs: &[f64], shape: f64, rate: f64| {
            MomentCheck::new(
                xs,
                shape / rate,
                shape / rate.powi(2),
                3.0 * shape * (shape + 2.0) / rate.powi(4),
            )
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..k {
            let xs: Vec<f64> = (0..N).map(|_| 1.0 / draw_local_aux(hs.local[i], &mut rng)).collect();
            tally.add(&format!("step 8 local aux {i}"), gamma_check(&xs, 1.0, 1.0 + 1.0 / hs.local[i]));
            let xs: Vec<f64> = (0..N)
                .map(|_| 1.0 / draw_local(hs.local_aux[i], a[i], hs.global, &mut rng))
                .collect();
            let rate = 1.0 / hs.local_aux[i] + a[i] * a[i] / (2.0 * hs.global);
            tally.add(&format!("step 8 local {i}"), gamma_check(&xs, 1.0, rate));
        }
        let xs: Vec<f64> = (0..N).map(|_| 1.0 / draw_global_aux(hs.global, &mut rng)).collect();
        tally.add("step 8 global aux", gamma_check(&xs, 1.0, 1.0 + 1.0 / hs.global));
        let xs: Vec<f64> = (0..N).map(|_| 1.0 / draw_global(hs.global_aux, &a, &hs.local, &mut rng)).collect();
        let rate = 1.0 / hs.global_aux + (0..k).map(|i| a[i] * a[i] / (2.0 * hs.local[i])).sum::<f64>();
        tally.add("step 8 global", gamma_check(&xs, 0.5 * (k as f64 + 1.0), rate));
    }

    // Step 11: error factors
    {
        let mv = f.design.variables();
        let qq = f.state.factor.q.ncols();
        let log_r = DMatrix::from_fn(t, qq, |s, j| 0.3 * ((s + j) as f64).sin());
        let means = f.state.conditional_means(x);
        let resid = &f.design.y - means;
        let gamma = f.state.gamma_matrix();
        let log_s2 = f.state.log_idio_variances();
        let mut factor = f.state.factor.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cols = vec![Vec::with_capacity(N); t * qq];
        for _ in 0..N {
            step11_factors(&mut factor, &resid, &gamma, &log_s2, &log_r, &mut rng).unwrap();
            for s in 0..t {
                for j in 0..qq {
                    cols[s * qq + j].push(factor.q[(s, j)]);
                }
            }
        }
        for s in 0..t {
            let sinv = DMatrix::from_diagonal(&DVector::from_fn(mv, |i, _| (-log_s2[(s, i)]).exp()));
            let rinv = DMatrix::from_diagonal(&DVector::from_fn(qq, |j, _| (-log_r[(s, j)]).exp()));
            let prec = gamma.transpose() * &sinv * &gamma + rinv;
            let cov = prec.try_inverse().unwrap();
            let e = DVector::from_fn(mv, |i, _| resid[(s, i)]);
            let mu = &cov * gamma.transpose() * &sinv * e;
            for j in 0..qq {
                tally.add(
                    &format!("step 11 q[{s},{j}]"),
                    MomentCheck::gaussian(&cols[s * qq + j], mu[j], cov[(j, j)]),
                );
            }
        }
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = tally.worst < 4.0 && secs < 120.0;
    report(
        1,
        "conditional conjugacy (steps 3-8, 11)",
        pass,
        &format!(
            "{} moment checks, max |z| = {:.2} at {}, {:.1}s",
            tally.checks, tally.worst, tally.worst_at, secs
        ),
    );
    assert!(pass);
}

/// Mean, variance and fourth central moment of a positive variable with
/// unnormalized log-density `log_p`, by quadrature on the log scale.
fn quadrature_moments(log_p: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let (lo, hi, n) = ((1e-10f64).ln(), (1e3f64).ln(), 400_000);
    let h = (hi - lo) / n as f64;
    let grid: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let u = lo + i as f64 * h;
            let v = u.exp();
            (v, log_p(v) + u)
        })
        .collect();
    let max = grid.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
    let weight = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let moment = |f: &dyn Fn(f64) -> f64| -> f64 {
        grid.iter().enumerate().map(|(i, (v, lp))| weight(i) * f(*v) * (lp - max).exp()).sum()
    };
    let z = moment(&|_| 1.0);
    let mu = moment(&|v| v) / z;
    let var = moment(&|v| (v - mu).powi(2)) / z;
    let m4 = moment(&|v| (v - mu).powi(4)) / z;
    (mu, var, m4)
}

// ---------------------------------------------------------------------------
// 2: block versus dense oracles

#[test]
fn c02_block_versus_dense() {
    // TVP draw on T = 3, K = 2
    let f = frozen_instance(3, 1, 1, 21);
    let data = SplitData::new(&f.design.z);
    let spec_x = f.design.x.columns(0, 2).into_owned();
    let m = 1;
    let mut eq = f.state.equations[m].clone();
    eq.a = eq.a.rows(0, 2).into_owned();
    eq.beta = eq.beta.columns(0, 2).into_owned();
    eq.lambda = eq.lambda.rows(0, 2).into_owned();
    eq.v = eq.v.rows(0, 2).into_owned();
    let y: Vec<f64> = f.design.y.column(m).iter().copied().collect();
    let gpv = vec![1.0];
    let inp = EquationInputs {
        index: m,
        y: &y,
        x: &spec_x,
        data: &data,
        q: &f.state.factor.q,
        gamma_prior_var: &gpv,
        config: &f.config,
    };
    let (t, k) = (3, 2);
    let z: Vec<f64> = f.design.z.column(0).iter().copied().collect();
    let mut prec: DMatrix<f64> = DMatrix::zeros(t * k, t * k);
    let mut rhs: DVector<f64> = DVector::zeros(t * k);
    for s in 0..t {
        let s2 = eq.sv.h[s].exp();
        let r = y[s] - dot(&spec_x, s, eq.a.as_slice()) - eq.gamma[0] * f.state.factor.q[(s, 0)];
        for i in 0..k {
            let pm = eq.lambda[(i, 0)] * hand_factor(&eq, z[s], 0);
            prec[(s * k + i, s * k + i)] += 1.0 / eq.v[i];
            rhs[s * k + i] += pm / eq.v[i] + spec_x[(s, i)] * r / s2;
            for j in 0..k {
                prec[(s * k + i, s * k + j)] += spec_x[(s, i)] * spec_x[(s, j)] / s2;
            }
        }
    }
    let dense_cov = prec.try_inverse().unwrap();
    let dense_mean: DVector<f64> = &dense_cov * rhs;
    let (means, covs) = tvp_conditional_moments(&eq, &inp);
    let mut moment_err: f64 = 0.0;
    for s in 0..t {
        for i in 0..k {
            moment_err = moment_err.max((means[(s, i)] - dense_mean[s * k + i]).abs());
            for j in 0..k {
                moment_err = moment_err.max((covs[s][(i, j)] - dense_cov[(s * k + i, s * k + j)]).abs());
            }
            for s2 in 0..t {
                if s2 != s {
                    for j in 0..k {
                        moment_err = moment_err.max(dense_cov[(s * k + i, s2 * k + j)].abs());
                    }
                }
            }
        }
    }

    // The draw is affine in the K + 1 standard normals it consumes per
    // period; recover that map from replayed streams and compare it with the
    // dense moments.
    let seeds = 12;
    let mut zs = vec![DMatrix::zeros(seeds, k + 2); t];
    let mut bs = vec![DMatrix::zeros(seeds, k); t];
    for sd in 0..seeds {
        let rng = ChaCha8Rng::seed_from_u64(500 + sd as u64);
        let mut replay = rng.clone();
        let mut rng = rng;
        let mut e = eq.clone();
        step4_tvp(&mut e, &inp, &mut rng).unwrap();
        for s in 0..t {
            for c in 0..=k {
                zs[s][(sd, c)] = normal(&mut replay);
            }
            zs[s][(sd, k + 1)] = 1.0;
            for i in 0..k {
                bs[s][(sd, i)] = e.beta[(s, i)];
            }
        }
    }
    let mut draw_err: f64 = 0.0;
    for s in 0..t {
        let coef = zs[s].clone().svd(true, true).solve(&bs[s], 1e-14).unwrap();
        let fitted = &zs[s] * &coef;
        draw_err = draw_err.max((&fitted - &bs[s]).amax());
        let a = coef.rows(0, k + 1).transpose();
        let implied_cov = &a * a.transpose();
        for i in 0..k {
            draw_err = draw_err.max((coef[(k + 1, i)] - dense_mean[s * k + i]).abs());
            for j in 0..k {
                draw_err = draw_err.max((implied_cov[(i, j)] - dense_cov[(s * k + i, s * k + j)]).abs());
            }
        }
    }

    // IRFs against forward simulation on a stable VAR(2)
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mv = 3;
    let (a1, a2) = loop {
        let a1 = DMatrix::from_fn(mv, mv, |_, _| 0.4 * normal(&mut rng));
        let a2 = DMatrix::from_fn(mv, mv, |_, _| 0.25 * normal(&mut rng));
        let c = tvpbart::structural::companion(&[a1.clone(), a2.clone()]);
        let rho = c.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        if rho < 0.95 && rho > 0.6 {
            break (a1, a2);
        }
    };
    let kx = 1 + 2 * mv;
    let mut design = DesignData::regression(
        DMatrix::zeros(4, mv),
        DMatrix::zeros(4, kx),
        DMatrix::zeros(4, 1),
        (0..4).map(|i| i.to_string()).collect(),
    )
    .unwrap();
    design.lags = 2;
    design.include_intercept = true;
    let coeffs: Vec<Vec<f64>> = (0..mv)
        .map(|i| {
            let mut row = vec![0.7];
            row.extend((0..mv).map(|j| a1[(i, j)]));
            row.extend((0..mv).map(|j| a2[(i, j)]));
            row
        })
        .collect();
    let impact = vec![1.0, -0.5, 0.25];
    let horizons = 17;
    let irf = irf_with(&design, &coeffs, &impact, horizons);
    let mut path = vec![DVector::zeros(mv), DVector::zeros(mv), DVector::from_vec(impact.clone())];
    let mut irf_err: f64 = 0.0;
    for h in 0..horizons {
        if h > 0 {
            let n = path.len();
            let next = &a1 * &path[n - 1] + &a2 * &path[n - 2];
            path.push(next);
        }
        let cur = path.last().unwrap();
        for i in 0..mv {
            irf_err = irf_err.max((irf[(h, i)] - cur[i]).abs());
        }
    }

    let pass = moment_err < 1e-10 && draw_err < 1e-10 && irf_err < 1e-10;
    report(
        2,
        "block-vs-dense oracles",
        pass,
        &format!(
            "TVP moments max err {moment_err:.1e}, realized draw map err {draw_err:.1e}, IRF max err {irf_err:.1e} (h = 0..16)"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4: tree-prior enumeration

/// `log N(u; 0, diag(w) + tau 11')` for the rows of one leaf.
fn leaf_log_marginal(u: &[f64], w: &[f64], tau: f64) -> f64 {
    let n = u.len();
    let cov = DMatrix::from_fn(n, n, |i, j| tau + if i == j { w[i] } else { 0.0 });
    let chol = cov.clone().cholesky().unwrap();
    let uv = DVector::from_column_slice(u);
    let sol = chol.solve(&uv);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + uv.dot(&sol))
}

#[test]
fn c04_tree_prior_enumeration() {
    let _g = serial();
    let u = [0.9, -1.1, 1.6];
    let w = [0.3, 0.5, 0.4];
    let tau = 0.8;
    let data = SplitData::from_columns(vec![vec![0.0, 1.0, 2.0]]);
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for nu in [1u32, 2] {
        let (alpha, zeta) = (0.95f64, 2.0f64);
        let p0 = alpha.powi(nu as i32);
        let p1 = alpha.powi(nu as i32) * 2f64.powf(-zeta.powi(nu as i32));
        let lm = |rows: &[usize]| {
            let uu: Vec<f64> = rows.iter().map(|&r| u[r]).collect();
            let ww: Vec<f64> = rows.iter().map(|&r| w[r]).collect();
            leaf_log_marginal(&uu, &ww, tau)
        };
        // classes: (root threshold or none, number of leaves)
        let classes: Vec<(Option<f64>, usize, f64)> = vec![
            (None, 1, (1.0 - p0).ln() + lm(&[0, 1, 2])),
            (Some(0.0), 2, (p0 * 0.5 * (1.0 - p1)).ln() + lm(&[0]) + lm(&[1, 2])),
            (Some(0.0), 3, (p0 * 0.5 * p1).ln() + lm(&[0]) + lm(&[1]) + lm(&[2])),
            (Some(1.0), 2, (p0 * 0.5 * (1.0 - p1)).ln() + lm(&[0, 1]) + lm(&[2])),
            (Some(1.0), 3, (p0 * 0.5 * p1).ln() + lm(&[0]) + lm(&[1]) + lm(&[2])),
        ];
        let max = classes.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = classes.iter().map(|c| (c.2 - max).exp()).sum();
        let exact: Vec<f64> = classes.iter().map(|c| (c.2 - max).exp() / total).collect();

        let prior = TreePrior {
            alpha,
            zeta,
            nu,
            n_min: 1,
        };
        let mut ens = Ensemble::new(1, nu, tau).unwrap();
        let target = WeightedTarget::dense(u.to_vec(), w.to_vec()).unwrap();
        let probs = MoveProbs::default();
        let mut rng = ChaCha8Rng::seed_from_u64(40 + nu as u64);
        let iters = 400_000;
        let mut ind = vec![Vec::with_capacity(iters); classes.len()];
        for it in 0..iters + 1000 {
            bart_sweep(&mut ens, &target, &data, &prior, &probs, &mut rng);
            if it < 1000 {
                continue;
            }
            let tree = &ens.trees[0];
            let key = (tree.rule(0).map(|r| r.1), tree.leaves().len());
            for (c, cls) in classes.iter().enumerate() {
                ind[c].push(f64::from(u8::from((cls.0, cls.1) == key)));
            }
        }
        for (c, xs) in ind.iter().enumerate() {
            let freq = mean(xs);
            let se = batch_se(xs, 100);
            let zsc = (freq - exact[c]) / se;
            worst = worst.max(zsc.abs());
            lines.push(format!("nu={nu} class {c}: {freq:.4} vs {:.4} (z {zsc:+.2})", exact[c]));
        }
    }
    let pass = worst < 3.0;
    report(
        4,
        "tree-prior enumeration",
        pass,
        &format!("5 structures x 2 factor indices, max |z| = {worst:.2}"),
    );
    for l in &lines {
        eprintln!("    {l}");
    }
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8: step change in a factor variance

#[test]
fn c08_heterobart_tracks_variance_step() {
    let _g = serial();
    let t = 300;
    let log_r: Vec<f64> = (0..t).map(|s| if s < 150 { -1.0 } else { 1.5 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let q: Vec<f64> = log_r.iter().map(|l| (0.5 * l).exp() * normal(&mut rng)).collect();
    let truth: Vec<f64> = log_r.iter().map(|l| l.exp()).collect();
    let mut noise = 0.0;
    let ar: Vec<f64> = (0..t)
        .map(|_| {
            noise = 0.9 * noise + 0.5 * normal(&mut rng);
            noise
        })
        .collect();
    let data = SplitData::from_columns(vec![
        (0..t).map(|s| f64::from(u8::from(s >= 150))).collect(),
        ar,
    ]);
    let config = ModelConfig::default();
    let table = MixtureTable::omori();
    let probs = MoveProbs::default();
    let (burn, keep) = (1000, 2000);

    let mut vol = FactorVolState::new(config.s_q, config.var_prior_var(), t).unwrap();
    let mut tree_fit = vec![0.0; t];
    for it in 0..burn + keep {
        factor_vol_sweep(&mut vol, &q, &data, &config, &probs, &table, &mut rng).unwrap();
        if it >= burn {
            for (f, l) in tree_fit.iter_mut().zip(vol.log_variance_path(&data)) {
                *f += l.exp() / keep as f64;
            }
        }
    }

    let start = (q.iter().map(|v| v * v).sum::<f64>() / t as f64).ln();
    let mut sv = SvState::new(t, start);
    let priors = SvPriors::default();
    let mut sv_fit = vec![0.0; t];
    for it in 0..burn + keep {
        sample_idio_sv(&q, &mut sv, &priors, &table, &mut rng).unwrap();
        if it >= burn {
            for (f, h) in sv_fit.iter_mut().zip(&sv.h) {
                *f += h.exp() / keep as f64;
            }
        }
    }
    let (rt, rs) = (rmse(&tree_fit, &truth), rmse(&sv_fit, &truth));
    let pass = rt <= 0.7 * rs;
    report(
        8,
        "heteroBART vs AR(1)-SV on a regime variance step",
        pass,
        &format!("fitted-variance RMSE {rt:.4} vs {rs:.4} (ratio {:.3}, limit 0.7)", rt / rs),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9: runtime at desk scale

fn desk_spec(periods: usize) -> DgpSpec {
    serde_json::from_str(&format!(
        r#"{{"periods": {periods}, "lags": 2,
        "coefficients": [[0.1, 0.4, 0.1, 0.0, 0.1, 0.0, 0.0],
                         [0.0, 0.1, 0.3, 0.1, 0.0, 0.1, 0.0],
                         [0.2, 0.0, 0.1, 0.4, 0.0, 0.0, 0.1]],
        "coefficient_laws": [{{"equation": 0, "regressor": 1, "path": "step", "modifier": 0, "threshold": 0.5, "low": 0.0, "high": 0.3}}],
        "modifiers": [{{"law": "regime", "start": {half}, "end": 100000}}, {{"law": "ar1", "phi": 0.9, "sd": 0.5}}],
        "gamma": [[1.0, 0.0], [-0.6, 0.5], [0.3, 1.0]],
        "factor_variance": [{{"law": "constant", "log_var": -1.0}}, {{"law": "constant", "log_var": -1.5}}],
        "idio_variance": [{{"law": "constant", "log_var": -2.0}}, {{"law": "constant", "log_var": -2.0}}, {{"law": "constant", "log_var": -2.0}}]}}"#,
        half = periods / 2
    ))
    .unwrap()
}

#[test]
fn c09_desk_scale_runtime() {
    let _g = serial();
    let sim = simulate_dgp(&desk_spec(120), 90).unwrap();
    let config = ModelConfig {
        lags: 2,
        n_draws: 2000,
        n_burn: 1000,
        ..ModelConfig::default()
    };
    let start = Instant::now();
    let design = prepare_design(&sim.dataset, &config).unwrap();
    assert_eq!((design.variables(), design.periods()), (3, 120));
    let draws = Sampler::new(config, design).unwrap().run().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = secs < 300.0 && draws.draws.len() == 1000;
    report(
        9,
        "desk-scale runtime",
        pass,
        &format!(
            "M=3, T=120, P=2, 2000 sweeps with default priors: {secs:.1}s on {} thread(s) (limit 300s)",
            rayon::current_num_threads()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7: shock identification

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn c07_shock_identification_recovery() {
    let _g = serial();
    let spec: DgpSpec = serde_json::from_str(
        r#"{"periods": 200, "lags": 1,
        "coefficients": [[0.1, 0.5, 0.1, 0.0], [0.0, 0.1, 0.4, 0.0], [0.0, 0.0, 0.1, 0.5]],
        "modifiers": [{"law": "regime", "start": 120, "end": 160}, {"law": "ar1", "phi": 0.9, "sd": 0.5}],
        "gamma": [[0.3, 1.0], [0.3, -0.8], [1.0, 0.0]],
        "factor_variance": [{"law": "constant", "log_var": 0.0},
                            {"law": "path", "path": "step", "modifier": 0, "threshold": 0.5, "low": 0.0, "high": 3.2188758248682006}],
        "idio_variance": [{"law": "constant", "log_var": -2.0}, {"law": "constant", "log_var": -2.0}, {"law": "constant", "log_var": -2.0}]}"#,
    )
    .unwrap();
    let sim = simulate_dgp(&spec, 70).unwrap();
    let config = ModelConfig {
        lags: 1,
        q_beta: 2,
        q_q: 2,
        n_draws: 2000,
        n_burn: 1000,
        seed: 71,
        ..ModelConfig::default()
    };
    let design = prepare_design(&sim.dataset, &config).unwrap();
    let recession: Vec<bool> = design.z.column(0).iter().map(|v| *v > 0.5).collect();
    let true_log_r2: Vec<f64> = sim.truth.log_r.column(1).iter().copied().collect();
    let draws = Sampler::new(config, design.clone()).unwrap().run().unwrap();

    let (out, unemp) = (0, 1);
    let y_out: Vec<f64> = design.y.column(out).iter().copied().collect();
    let sd_scaled = var(&y_out).sqrt();
    let raw_out: Vec<f64> = sim.dataset.y.column(out).iter().skip(1).copied().collect();
    let sd_raw = var(&raw_out).sqrt();
    let (mut role, mut literal, mut exact_fail, mut conflicts) = (0, 0, 0, 0);
    for d in &draws.draws {
        let shock = identify_bc_shock(d, &design, &recession, (out, unemp)).unwrap();
        let corrs: Vec<f64> = (0..2)
            .map(|s| corr(d.log_r.column(s).as_slice(), &true_log_r2))
            .collect();
        let matched = if corrs[1] > corrs[0] { 1 } else { 0 };
        role += usize::from(shock.factor == matched);
        literal += usize::from(shock.factor == 1);
        conflicts += usize::from(shock.sign_conflict);
        let impact = shock.impact(&d.gamma);
        let mut ok = (impact[out] + sd_scaled).abs() <= 1e-12 * sd_scaled;
        if !shock.sign_conflict {
            ok &= impact[unemp] > 0.0;
        }
        let irf = irf_with(&design, &(0..3).map(|m| d.coefficients(m, 0)).collect::<Vec<_>>(), &impact, 1);
        ok &= (irf[(0, out)] + sd_raw).abs() <= 1e-10 * sd_raw;
        exact_fail += usize::from(!ok);
    }
    let n = draws.draws.len();
    let share = role as f64 / n as f64;
    let pass = share >= 0.95 && exact_fail == 0;
    report(
        7,
        "shock identification recovery",
        pass,
        &format!(
            "high-variance factor selected in {:.1}% of {n} draws (literal index 2: {:.1}%), normalization violated in {exact_fail}, sign conflicts {conflicts}",
            100.0 * share,
            100.0 * literal as f64 / n as f64
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5: toy Phillips curve

/// Posterior-mean path of the unemployment coefficient.
fn toy_fit(ds: &tvpbart::model::Dataset, trees: usize, seed: u64) -> Vec<f64> {
    let design = toy_phillips_design(ds).unwrap();
    let config = ModelConfig {
        lags: 1,
        q_beta: 1,
        q_q: 1,
        s_beta: trees,
        s_q: 20,
        n_draws: 3000,
        n_burn: 1000,
        scale_data: false,
        seed,
        ..ModelConfig::default()
    };
    let draws: PosteriorDraws = Sampler::new(config, design).unwrap().run().unwrap();
    let n = draws.draws.len() as f64;
    (0..ds.periods())
        .map(|t| draws.draws.iter().map(|d| d.coefficients(0, t)[1]).sum::<f64>() / n)
        .collect()
}

#[test]
fn c05_toy_phillips_smoothness_and_regimes() {
    let _g = serial();
    let start = Instant::now();
    let sine = ToyLaw::Sine {
        level: -0.5,
        amplitude: 0.3,
        period: 200.0,
    };
    let (ds, truth) = simulate_toy_phillips(200, &sine, 1.0, 0.3, 50).unwrap();
    let rmse_many = rmse(&toy_fit(&ds, 150, 51), &truth);
    let rmse_one = rmse(&toy_fit(&ds, 1, 51), &truth);

    let step = ToyLaw::Step {
        break_at: 100,
        low: -0.2,
        high: -0.8,
    };
    let (ds, _) = simulate_toy_phillips(200, &step, 1.0, 0.3, 52).unwrap();
    let path = toy_fit(&ds, 1, 53);
    let early = mean(&path[..100]);
    let late = mean(&path[100..]);
    let secs = start.elapsed().as_secs_f64();
    let pass = rmse_many < rmse_one && (early + 0.2).abs() < 0.1 && (late + 0.8).abs() < 0.1 && secs < 600.0;
    report(
        5,
        "toy Phillips curve",
        pass,
        &format!(
            "sine RMSE {rmse_many:.4} (150 trees) vs {rmse_one:.4} (1 tree); step regimes {early:.3} / {late:.3} (truth -0.2 / -0.8); {secs:.0}s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6: WAIC ordering

fn waic_spec(tvp: bool) -> DgpSpec {
    let laws = if tvp {
        r#"[{"equation": 0, "regressor": 1, "path": "step", "modifier": 0, "threshold": 0.5, "low": 0.0, "high": 0.4},
            {"equation": 1, "regressor": 0, "path": "step", "modifier": 1, "threshold": 0.0, "low": -0.5, "high": 0.5},
            {"equation": 2, "regressor": 3, "path": "step", "modifier": 0, "threshold": 0.5, "low": 0.0, "high": -0.5}]"#
    } else {
        "[]"
    };
    serde_json::from_str(&format!(
        r#"{{"periods": 250, "lags": 1,
        "coefficients": [[0.0, 0.3, 0.1, 0.0], [0.0, 0.0, 0.4, 0.1], [0.0, 0.1, 0.0, 0.5]],
        "coefficient_laws": {laws},
        "modifiers": [{{"law": "regime", "start": 125, "end": 100000}}, {{"law": "ar1", "phi": 0.8, "sd": 0.6}}],
        "gamma": [[1.0], [-0.6], [0.4]],
        "factor_variance": [{{"law": "constant", "log_var": 0.0}}],
        "idio_variance": [{{"law": "constant", "log_var": -1.0}}, {{"law": "constant", "log_var": -1.0}}, {{"law": "constant", "log_var": -1.0}}]}}"#
    ))
    .unwrap()
}

fn waic_of(ds: &tvpbart::model::Dataset, constant: bool, seed: u64) -> f64 {
    let config = ModelConfig {
        lags: 1,
        q_beta: 3,
        q_q: 2,
        s_beta: 1,
        s_q: 50,
        n_draws: 2000,
        n_burn: 1000,
        seed,
        constant_coefficients: constant,
        ..ModelConfig::default()
    };
    let design = prepare_design(ds, &config).unwrap();
    let draws = Sampler::new(config, design).unwrap().run().unwrap();
    waic(&draws.loglik).unwrap().waic
}

#[test]
fn c06_waic_ordering() {
    let _g = serial();
    let start = Instant::now();
    let reps: usize = std::env::var("TVPBART_WAIC_REPS").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let mut tvp_wins = 0;
    let mut const_wins = 0;
    let mut lines = Vec::new();
    for r in 0..reps {
        let sim = simulate_dgp(&waic_spec(true), 600 + r as u64).unwrap();
        let (wt, wc) = (waic_of(&sim.dataset, false, 700 + r as u64), waic_of(&sim.dataset, true, 700 + r as u64));
        tvp_wins += usize::from(wt < wc);
        let sim = simulate_dgp(&waic_spec(false), 800 + r as u64).unwrap();
        let (vt, vc) = (waic_of(&sim.dataset, false, 900 + r as u64), waic_of(&sim.dataset, true, 900 + r as u64));
        const_wins += usize::from(vc < vt);
        lines.push(format!("rep {r}: tree DGP {wt:.1} vs {wc:.1}; constant DGP {vt:.1} vs {vc:.1}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let need_tvp = (9 * reps).div_ceil(10);
    let need_const = (7 * reps).div_ceil(10);
    let pass = tvp_wins >= need_tvp && const_wins >= need_const && secs < 3600.0;
    report(
        6,
        "WAIC ordering",
        pass,
        &format!(
            "TVP beats constant on tree-driven DGP in {tvp_wins}/{reps}; constant beats TVP on constant DGP in {const_wins}/{reps}; {secs:.0}s"
        ),
    );
    for l in &lines {
        eprintln!("    {l}");
    }
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3: joint distribution test

const GIR_T: usize = 12;

fn gir_config() -> ModelConfig {
    ModelConfig {
        lags: 1,
        q_beta: 1,
        q_q: 1,
        s_beta: 1,
        s_q: 1,
        n_min: 3,
        seed: 2024,
        scale_data: false,
        ..ModelConfig::default()
    }
}

fn gir_design() -> DesignData {
    let x = DMatrix::from_fn(GIR_T, 2, |t, j| if j == 0 { 1.0 } else { (0.7 * t as f64).sin() });
    let z = DMatrix::from_fn(GIR_T, 1, |t, _| t as f64);
    let dates = (0..GIR_T).map(|t| t.to_string()).collect();
    DesignData::regression(DMatrix::zeros(GIR_T, 2), x, z, dates).unwrap()
}

fn prior_horseshoe(n: usize, rng: &mut ChaCha8Rng) -> HorseshoeBlock {
    let mut b = HorseshoeBlock::new(n);
    for i in 0..n {
        b.local_aux[i] = inv_gamma(0.5, 1.0, rng);
        b.local[i] = inv_gamma(0.5, 1.0 / b.local_aux[i], rng);
    }
    b.global_aux = inv_gamma(0.5, 1.0, rng);
    b.global = inv_gamma(0.5, 1.0 / b.global_aux, rng);
    b
}

fn prior_tree(ens: &mut Ensemble, config: &ModelConfig, data: &SplitData, rng: &mut ChaCha8Rng) {
    let prior = ens.prior(config.alpha, config.zeta, config.n_min);
    ens.draw_from_prior(data, &prior, rng);
}

/// One draw of every parameter and latent state from the prior.
fn prior_state(design: &DesignData, config: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelState {
    let data = SplitData::new(&design.z);
    let mut state = ModelState::initialize(design, config, rng).unwrap();
    let (t_len, k) = (design.periods(), design.regressors());
    let m = design.variables();
    state.factor.hs_gamma = vec![prior_horseshoe(m, rng)];
    for (i, eq) in state.equations.iter_mut().enumerate() {
        eq.hs_a = prior_horseshoe(k, rng);
        eq.hs_lambda = vec![prior_horseshoe(k, rng)];
        for j in 0..k {
            eq.a[j] = eq.hs_a.prior_var(j).sqrt() * normal(rng);
            eq.lambda[(j, 0)] = eq.hs_lambda[0].prior_var(j).sqrt() * normal(rng);
            eq.v[j] = config.b_v * normal(rng).powi(2);
        }
        prior_tree(&mut eq.mean_trees[0], config, &data, rng);
        let prior_mean = eq.tvp_prior_mean(&data);
        for t in 0..t_len {
            for j in 0..k {
                eq.beta[(t, j)] = prior_mean[(t, j)] + eq.v[j].sqrt() * normal(rng);
            }
        }
        eq.gamma[0] = state.factor.hs_gamma[0].prior_var(i).sqrt() * normal(rng);
        let sv = &mut eq.sv;
        sv.mu = 10f64.sqrt() * normal(rng);
        sv.phi = 2.0 * Beta::new(25.0, 5.0).unwrap().sample(rng) - 1.0;
        sv.sigma2 = normal(rng).powi(2);
        sv.h[0] = sv.mu + (sv.sigma2 / (1.0 - sv.phi * sv.phi)).sqrt() * normal(rng);
        for t in 1..t_len {
            sv.h[t] = sv.mu + sv.phi * (sv.h[t - 1] - sv.mu) + sv.sigma2.sqrt() * normal(rng);
        }
    }
    prior_tree(&mut state.factor.vol[0].ensemble, config, &data, rng);
    let log_r = state.factor.log_variances(&data);
    for t in 0..t_len {
        state.factor.q[(t, 0)] = (0.5 * log_r[(t, 0)]).exp() * normal(rng);
    }
    state
}

fn simulate_responses(state: &ModelState, x: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let means = state.conditional_means(x);
    DMatrix::from_fn(x.nrows(), state.equations.len(), |t, i| {
        let eq = &state.equations[i];
        means[(t, i)] + eq.gamma[0] * state.factor.q[(t, 0)] + (0.5 * eq.sv.h[t]).exp() * normal(rng)
    })
}

const GIR_NAMES: [&str; 20] = [
    "a[0,0]",
    "a[1,1]",
    "lambda[0][1]",
    "log v[0,0]",
    "log v[1,1]",
    "beta[0][4,1]",
    "beta[1][9,0]",
    "F_0(z_2)",
    "mean-tree leaves",
    "gamma[0]",
    "gamma[1]",
    "gamma[1] q_6",
    "log r_3",
    "variance-tree leaves",
    "h[0][5]",
    "mu_1",
    "phi_0",
    "log sigma2_1",
    "log global(a_0)",
    "log local(gamma)[1]",
];

fn gir_stats(state: &ModelState, data: &SplitData) -> [f64; 20] {
    let (e0, e1) = (&state.equations[0], &state.equations[1]);
    let f = &state.factor;
    let log_r = f.log_variances(data);
    [
        e0.a[0],
        e1.a[1],
        e0.lambda[(1, 0)],
        e0.v[0].ln(),
        e1.v[1].ln(),
        e0.beta[(4, 1)],
        e1.beta[(9, 0)],
        e0.mean_trees[0].evaluate_row(data, 2),
        e1.mean_trees[0].trees[0].leaves().len() as f64,
        e0.gamma[0],
        e1.gamma[0],
        e1.gamma[0] * f.q[(6, 0)],
        log_r[(3, 0)],
        f.vol[0].ensemble.trees[0].leaves().len() as f64,
        e0.sv.h[5],
        e1.sv.mu,
        e0.sv.phi,
        e1.sv.sigma2.ln(),
        e0.hs_a.global.ln(),
        f.hs_gamma[0].local[1].ln(),
    ]
}

#[test]
fn c03_joint_distribution_test() {
    let _g = serial();
    let start = Instant::now();
    let sweeps: usize = std::env::var("TVPBART_GIR_SWEEPS").ok().and_then(|v| v.parse().ok()).unwrap_or(50_000);
    let config = gir_config();
    let design = gir_design();
    let data = SplitData::new(&design.z);
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut marginal: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); 20];
    for _ in 0..sweeps {
        let s = prior_state(&design, &config, &mut rng);
        for (col, v) in marginal.iter_mut().zip(gir_stats(&s, &data)) {
            col.push(v);
        }
    }

    let init = prior_state(&design, &config, &mut rng);
    let mut d = design.clone();
    d.y = simulate_responses(&init, &design.x, &mut rng);
    let mut sampler = Sampler::with_state(config, d, init);
    let mut chain: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); 20];
    let mut failures = 0usize;
    for _ in 0..sweeps {
        if sampler.sweep().is_err() {
            failures += 1;
        }
        for (col, v) in chain.iter_mut().zip(gir_stats(&sampler.state, &data)) {
            col.push(v);
        }
        sampler.design.y = simulate_responses(&sampler.state, &design.x, &mut rng);
    }

    let mut worst = (0.0f64, "");
    let mut lines = Vec::new();
    for (i, name) in GIR_NAMES.iter().enumerate() {
        let (sm, sc) = pooled_uniform_scores(&marginal[i], &chain[i]);
        let se = (batch_se(&sm, 100).powi(2) + batch_se(&sc, 100).powi(2)).sqrt();
        let z = (mean(&sc) - mean(&sm)) / se;
        if z.abs() > worst.0 {
            worst = (z.abs(), name);
        }
        lines.push(format!("{name}: z = {z:+.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.0 < 4.0 && failures == 0 && secs < 900.0;
    report(
        3,
        "joint distribution test",
        pass,
        &format!("{} functions, {sweeps} sweeps, max |z| {:.2} ({}), {failures} failed sweeps, {secs:.0}s", GIR_NAMES.len(), worst.0, worst.1),
    );
    for l in &lines {
        eprintln!("    {l}");
    }
    assert!(pass);
}
