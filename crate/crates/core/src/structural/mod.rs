//! Post-estimation analysis of retained draws: variance shares, shock
//! identification, impulse responses, Phillips-curve multipliers, scenario
//! coefficients and WAIC.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignData;
use crate::sampler::RetainedDraw;

/// Denominators of the Phillips-curve multiplier below this magnitude leave
/// the entry undefined.
pub const MULTIPLIER_TOL: f64 = 1e-10;

/// Shares `r_j gamma_ij^2 / [Gamma R Gamma' + Sigma]_ii` of each variable's
/// one-step variance due to factor `j`.
pub fn variance_share(gamma: &DMatrix<f64>, r: &[f64], sigma2: &[f64], j: usize) -> Result<Vec<f64>> {
    let (m, q) = gamma.shape();
    if r.len() != q || sigma2.len() != m || j >= q {
        return Err(Error::Dimension(format!(
            "variance share needs {q} factor variances, {m} idiosyncratic variances and j < {q}"
        )));
    }
    (0..m)
        .map(|i| {
            let total: f64 = (0..q).map(|s| r[s] * gamma[(i, s)].powi(2)).sum::<f64>() + sigma2[i];
            if !(total > 0.0) {
                return Err(Error::Parameter(format!("variable {i} has zero total variance")));
            }
            Ok(r[j] * gamma[(i, j)].powi(2) / total)
        })
        .collect()
}

/// Variance shares of factor `j` in every period of a draw, `T x M`.
pub fn share_path(draw: &RetainedDraw, j: usize) -> Result<DMatrix<f64>> {
    let (t, m) = (draw.periods(), draw.variables());
    let mut out = DMatrix::zeros(t, m);
    for p in 0..t {
        let (r, s2) = period_variances(draw, p);
        for (i, v) in variance_share(&draw.gamma, &r, &s2, j)?.into_iter().enumerate() {
            out[(p, i)] = v;
        }
    }
    Ok(out)
}

fn period_variances(draw: &RetainedDraw, t: usize) -> (Vec<f64>, Vec<f64>) {
    let r = draw.log_r.row(t).iter().map(|v| v.exp()).collect();
    let s2 = draw.log_sigma2.row(t).iter().map(|v| v.exp()).collect();
    (r, s2)
}

/// Labeled business-cycle shock of one draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockId {
    /// Zero-based factor index.
    pub factor: usize,
    /// `+1` or `-1`.
    pub sign: f64,
    /// Multiplier putting the output impact at minus one standard deviation.
    pub scale: f64,
    /// Output and unemployment loadings share a sign, so the sign follows
    /// output alone.
    pub sign_conflict: bool,
}

impl ShockId {
    /// Structural impact vector `s kappa gamma_j` in estimation units.
    pub fn impact(&self, gamma: &DMatrix<f64>) -> Vec<f64> {
        gamma.column(self.factor).iter().map(|g| self.sign * self.scale * g).collect()
    }
}

/// Labels the factor explaining most recession-period variance of the two
/// target variables (output, unemployment), signs it so output falls and
/// unemployment rises, and scales it so output drops by one in-sample
/// standard deviation on impact.
pub fn identify_bc_shock(
    draw: &RetainedDraw,
    design: &DesignData,
    recession: &[bool],
    targets: (usize, usize),
) -> Result<ShockId> {
    let (out, unemp) = targets;
    let t = draw.periods();
    if recession.len() != t {
        return Err(Error::Dimension(format!(
            "{} recession flags for {t} periods",
            recession.len()
        )));
    }
    if out >= draw.variables() || unemp >= draw.variables() {
        return Err(Error::Identification("target variable index out of range".into()));
    }
    let flagged: Vec<usize> = (0..t).filter(|&p| recession[p]).collect();
    if flagged.is_empty() {
        return Err(Error::Identification("no flagged recession period".into()));
    }
    let q = draw.gamma.ncols();
    let mut score = vec![0.0; q];
    for &p in &flagged {
        let (r, s2) = period_variances(draw, p);
        for (j, sc) in score.iter_mut().enumerate() {
            let z = variance_share(&draw.gamma, &r, &s2, j)?;
            *sc += z[out] + z[unemp];
        }
    }
    let factor = (0..q).fold(0, |best, j| if score[j] > score[best] { j } else { best });
    let g_out = draw.gamma[(out, factor)];
    let g_unemp = draw.gamma[(unemp, factor)];
    if g_out == 0.0 {
        return Err(Error::Identification(format!(
            "factor {} has no output loading",
            factor + 1
        )));
    }
    let sign = if g_out > 0.0 { -1.0 } else { 1.0 };
    let sign_conflict = g_unemp * g_out > 0.0;
    let sd = sample_sd(design.y.column(out).iter().copied());
    Ok(ShockId {
        factor,
        sign,
        scale: sd / g_out.abs(),
        sign_conflict,
    })
}

fn sample_sd(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Lag matrices `A_1, ..., A_P` (each `M x M`) of the VAR whose equation `m`
/// has regressor coefficients `coeffs[m]`, in the regressor layout of `design`.
pub fn lag_matrices(design: &DesignData, coeffs: &[Vec<f64>]) -> Vec<DMatrix<f64>> {
    let m = design.variables();
    let off = design.lag_offset();
    (0..design.lags)
        .map(|p| DMatrix::from_fn(m, m, |i, k| coeffs[i][off + p * m + k]))
        .collect()
}

/// Companion matrix of the VAR with lag matrices `lags`.
pub fn companion(lags: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = lags.first().map_or(0, |a| a.nrows());
    let n = m * lags.len();
    let mut c = DMatrix::zeros(n, n);
    for (p, a) in lags.iter().enumerate() {
        c.view_mut((0, p * m), (m, m)).copy_from(a);
    }
    for i in m..n {
        c[(i, i - m)] = 1.0;
    }
    c
}

/// Largest eigenvalue modulus of the companion matrix.
pub fn spectral_radius(companion: &DMatrix<f64>) -> f64 {
    if companion.is_empty() {
        return 0.0;
    }
    companion
        .clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0, |a: f64, e| a.max(e.norm()))
}

/// Responses to `impact` over `horizons` steps: row `h` is the top block of
/// `C^h [impact; 0]`, so row 0 is the impact itself.
pub fn propagate(lags: &[DMatrix<f64>], impact: &[f64], horizons: usize) -> DMatrix<f64> {
    let m = impact.len();
    let mut out = DMatrix::zeros(horizons, m);
    if lags.is_empty() {
        if horizons > 0 {
            out.row_mut(0).copy_from_slice(impact);
        }
        return out;
    }
    let c = companion(lags);
    let mut state = nalgebra::DVector::zeros(c.nrows());
    state.rows_mut(0, m).copy_from_slice(impact);
    for h in 0..horizons {
        for i in 0..m {
            out[(h, i)] = state[i];
        }
        state = &c * state;
    }
    out
}

/// Impulse responses of a draw at period `t` to its identified shock, in the
/// original units of each variable: `horizons x M`, row 0 being the impact
/// (reported as horizon 1).
pub fn irf(draw: &RetainedDraw, design: &DesignData, t: usize, shock: &ShockId, horizons: usize) -> Result<DMatrix<f64>> {
    if t >= draw.periods() {
        return Err(Error::Dimension(format!("period {t} outside 0..{}", draw.periods())));
    }
    let coeffs: Vec<Vec<f64>> = (0..draw.variables()).map(|m| draw.coefficients(m, t)).collect();
    Ok(irf_with(design, &coeffs, &shock.impact(&draw.gamma), horizons))
}

/// As [`irf`] for explicit coefficient rows (estimation units).
pub fn irf_with(design: &DesignData, coeffs: &[Vec<f64>], impact: &[f64], horizons: usize) -> DMatrix<f64> {
    let mut r = propagate(&lag_matrices(design, coeffs), impact, horizons);
    for m in 0..r.ncols() {
        let u = design.unit(m);
        r.column_mut(m).scale_mut(u);
    }
    r
}

/// Responses per draw and period with the shock labels used.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfResult {
    /// `responses[s][i]` is the `horizons x M` response of draw `s` at
    /// `periods[i]`.
    pub responses: Vec<Vec<DMatrix<f64>>>,
    pub periods: Vec<usize>,
    pub shocks: Vec<ShockId>,
    pub horizons: usize,
    /// Draw-period pairs whose companion matrix has spectral radius >= 1.
    pub explosive: usize,
}

/// Identifies the shock in every draw and computes the time-`t` responses for
/// each requested period.
pub fn irf_all(
    draws: &[RetainedDraw],
    design: &DesignData,
    recession: &[bool],
    targets: (usize, usize),
    periods: &[usize],
    horizons: usize,
) -> Result<IrfResult> {
    let per_draw: Vec<Result<(ShockId, Vec<DMatrix<f64>>, usize)>> = draws
        .par_iter()
        .map(|d| {
            let shock = identify_bc_shock(d, design, recession, targets)?;
            let mut rs = Vec::with_capacity(periods.len());
            let mut explosive = 0;
            for &t in periods {
                let coeffs: Vec<Vec<f64>> = (0..d.variables()).map(|m| d.coefficients(m, t)).collect();
                if spectral_radius(&companion(&lag_matrices(design, &coeffs))) >= 1.0 {
                    explosive += 1;
                }
                rs.push(irf(d, design, t, &shock, horizons)?);
            }
            Ok((shock, rs, explosive))
        })
        .collect();
    let mut out = IrfResult {
        responses: Vec::with_capacity(draws.len()),
        periods: periods.to_vec(),
        shocks: Vec::with_capacity(draws.len()),
        horizons,
        explosive: 0,
    };
    for r in per_draw {
        let (s, rs, e) = r?;
        out.shocks.push(s);
        out.responses.push(rs);
        out.explosive += e;
    }
    Ok(out)
}

/// Posterior summary of a horizon-by-variable quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfSummary {
    pub lower: DMatrix<f64>,
    pub median: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

/// Linear-interpolation quantile of an unsorted sample, `p` in `[0, 1]`.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Per-draw time average followed by the 16th, 50th and 84th percentiles
/// across draws.
pub fn average_irf(result: &IrfResult) -> Result<IrfSummary> {
    Ok(summarize(&time_averages(result)?))
}

/// Per-draw average of the responses over the requested periods.
pub fn time_averages(result: &IrfResult) -> Result<Vec<DMatrix<f64>>> {
    if result.responses.is_empty() || result.periods.is_empty() {
        return Err(Error::TooFewDraws("no responses to summarize".into()));
    }
    let means: Vec<DMatrix<f64>> = result
        .responses
        .iter()
        .map(|rs| rs.iter().fold(DMatrix::zeros(rs[0].nrows(), rs[0].ncols()), |a, r| a + r) / rs.len() as f64)
        .collect();
    Ok(means)
}

/// 16th, 50th and 84th percentiles across a set of equally shaped matrices.
pub fn summarize(mats: &[DMatrix<f64>]) -> IrfSummary {
    summarize_band(mats, 0.16, 0.84)
}

/// Elementwise `lo`, median and `hi` quantiles across equally shaped matrices.
pub fn summarize_band(mats: &[DMatrix<f64>], lo: f64, hi: f64) -> IrfSummary {
    let (h, m) = mats[0].shape();
    let band = |p: f64| {
        DMatrix::from_fn(h, m, |i, j| {
            let xs: Vec<f64> = mats.iter().map(|a| a[(i, j)]).collect();
            quantile(&xs, p)
        })
    };
    IrfSummary {
        lower: band(lo),
        median: band(0.5),
        upper: band(hi),
    }
}

/// Price response divided by the unemployment response at each horizon;
/// `None` where the unemployment response is numerically zero.
pub fn phillips_multiplier(price: &[f64], unemp: &[f64]) -> Vec<Option<f64>> {
    price
        .iter()
        .zip(unemp)
        .map(|(p, u)| if u.abs() < MULTIPLIER_TOL { None } else { Some(p / u) })
        .collect()
}

/// Systematic TVP component `Lambda_m F_m(z*)` of equation `m` at a
/// counterfactual modifier row.
pub fn scenario_tvp(draw: &RetainedDraw, m: usize, z_star: &[f64]) -> Vec<f64> {
    let lambda = &draw.lambda[m];
    let f: Vec<f64> = draw.mean_trees[m].iter().map(|e| e.evaluate(z_star)).collect();
    (0..lambda.nrows())
        .map(|k| (0..lambda.ncols()).map(|q| lambda[(k, q)] * f[q]).sum())
        .collect()
}

/// Responses when every equation's coefficients are `a_m + beta*_m(z*)`.
pub fn scenario_irf(draw: &RetainedDraw, design: &DesignData, z_star: &[f64], shock: &ShockId, horizons: usize) -> DMatrix<f64> {
    let coeffs: Vec<Vec<f64>> = (0..draw.variables())
        .map(|m| {
            scenario_tvp(draw, m, z_star)
                .iter()
                .enumerate()
                .map(|(k, b)| draw.a[(m, k)] + b)
                .collect()
        })
        .collect();
    irf_with(design, &coeffs, &shock.impact(&draw.gamma), horizons)
}

/// Counterfactual modifier rows: modifier `vary` at each sample percentile,
/// every other modifier at its mean over the anchor rows.
pub fn scenario_grid(z: &DMatrix<f64>, vary: usize, percentiles: &[f64], anchor: std::ops::Range<usize>) -> Result<Vec<Vec<f64>>> {
    if vary >= z.ncols() {
        return Err(Error::Dimension(format!("modifier {vary} out of range")));
    }
    if anchor.is_empty() || anchor.end > z.nrows() {
        return Err(Error::Dimension("anchor window is empty or out of range".into()));
    }
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::Parameter(format!("percentile {p} outside [0, 100]")));
    }
    let n = anchor.len() as f64;
    let base: Vec<f64> = (0..z.ncols())
        .map(|j| anchor.clone().map(|r| z[(r, j)]).sum::<f64>() / n)
        .collect();
    let col: Vec<f64> = z.column(vary).iter().copied().collect();
    Ok(percentiles
        .iter()
        .map(|p| {
            let mut row = base.clone();
            row[vary] = quantile(&col, p / 100.0);
            row
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lpd: f64,
    pub p_waic: f64,
}

/// WAIC from a draws-by-periods matrix of pointwise log-likelihoods:
/// `lpd = sum_t log mean_s exp(l_st)`, `p = sum_t var_s(l_st)`,
/// `WAIC = -2 (lpd - p)`.
pub fn waic(loglik: &DMatrix<f64>) -> Result<Waic> {
    let (s, t) = loglik.shape();
    if s < 2 {
        return Err(Error::TooFewDraws(format!("WAIC needs at least 2 draws, got {s}")));
    }
    if loglik.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("log-likelihood matrix has non-finite entries".into()));
    }
    let mut lpd = 0.0;
    let mut p = 0.0;
    for j in 0..t {
        let col = loglik.column(j);
        let max = col.max();
        let sum: f64 = col.iter().map(|v| (v - max).exp()).sum();
        lpd += max + (sum / s as f64).ln();
        let mean = col.mean();
        p += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
    }
    Ok(Waic {
        waic: -2.0 * (lpd - p),
        lpd,
        p_waic: p,
    })
}

/// One terminal node of a summarized tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    /// Split conditions from the root, as `(modifier, goes_left, threshold)`;
    /// `goes_left` means `z <= threshold`.
    pub conditions: Vec<(usize, bool, f64)>,
    /// Fraction of periods falling in the node.
    pub share: f64,
    /// Posterior mean of the coefficient over the node's periods, in original units.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    /// Retained draw whose tree defines the regimes.
    pub draw: usize,
    /// Fraction of retained draws whose first tree has exactly that structure.
    pub support: f64,
    pub regimes: Vec<Regime>,
}

impl RegimeSummary {
    pub fn describe(&self, modifier_names: &[String]) -> Vec<String> {
        self.regimes
            .iter()
            .map(|r| {
                let rule = if r.conditions.is_empty() {
                    "all periods".to_string()
                } else {
                    r.conditions
                        .iter()
                        .map(|&(v, left, th)| {
                            let name = modifier_names.get(v).map_or("z", |s| s.as_str());
                            format!("{name} {} {th}", if left { "<=" } else { ">" })
                        })
                        .collect::<Vec<_>>()
                        .join(" & ")
                };
                format!("{rule}: coefficient {:.4}, share {:.3}", r.coefficient, r.share)
            })
            .collect()
    }
}

/// Coefficient path `a + Lambda F(z_t)` of one regressor without the
/// idiosyncratic TVP noise, in original units.
fn systematic_path(d: &RetainedDraw, design: &DesignData, m: usize, regressor: usize) -> Vec<f64> {
    let k = d.a.ncols();
    (0..design.periods())
        .map(|t| {
            let z: Vec<f64> = design.z.row(t).iter().copied().collect();
            let tvp = scenario_tvp(d, m, &z);
            let c: Vec<f64> = (0..k).map(|j| d.a[(m, j)] + tvp.get(j).copied().unwrap_or(0.0)).collect();
            design.coefficients_to_original(m, &c)[regressor]
        })
        .collect()
}

/// Reads regimes off the first tree of the first TVP factor of equation `m`.
/// The tree comes from the draw whose systematic coefficient path is closest
/// to the posterior mean path; each terminal node reports the posterior mean
/// coefficient on `regressor` averaged over the node's periods.
pub fn regime_summary(draws: &[RetainedDraw], design: &DesignData, m: usize, regressor: usize) -> Result<RegimeSummary> {
    if draws.is_empty() {
        return Err(Error::TooFewDraws("no retained draws".into()));
    }
    if m >= design.variables() || regressor >= design.regressors() {
        return Err(Error::Dimension("equation or regressor out of range".into()));
    }
    let first_tree = |d: &RetainedDraw| d.mean_trees.get(m).and_then(|e| e.first()).and_then(|e| e.trees.first()).cloned();
    if draws.iter().any(|d| first_tree(d).is_none()) {
        return Err(Error::Tree("draws carry no mean trees".into()));
    }
    let t = design.periods();
    let n = draws.len() as f64;
    let paths: Vec<Vec<f64>> = draws.iter().map(|d| systematic_path(d, design, m, regressor)).collect();
    let centre: Vec<f64> = (0..t).map(|r| paths.iter().map(|p| p[r]).sum::<f64>() / n).collect();
    let dist = |p: &Vec<f64>| p.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let pick = (0..draws.len()).fold(0, |best, i| if dist(&paths[i]) < dist(&paths[best]) { i } else { best });
    let tree = first_tree(&draws[pick]).expect("checked above");
    let key = tree.structure_key();
    let hits = draws
        .iter()
        .filter(|d| first_tree(d).is_some_and(|tr| tr.structure_key() == key))
        .count();
    let mean_coef: Vec<f64> = (0..t)
        .map(|r| {
            draws
                .iter()
                .map(|d| design.coefficients_to_original(m, &d.coefficients(m, r))[regressor])
                .sum::<f64>()
                / n
        })
        .collect();
    let cells = tree.cells(&crate::tree::SplitData::new(&design.z));
    let regimes = tree
        .leaves()
        .into_iter()
        .map(|leaf| {
            let rows = &cells[leaf];
            let coefficient = if rows.is_empty() {
                f64::NAN
            } else {
                rows.iter().map(|&r| mean_coef[r]).sum::<f64>() / rows.len() as f64
            };
            Regime {
                conditions: tree
                    .path_to(leaf)
                    .into_iter()
                    .map(|(node, left)| {
                        let (v, th) = tree.rule(node).expect("ancestor is a split");
                        (v, left, th)
                    })
                    .collect(),
                share: rows.len() as f64 / t as f64,
                coefficient,
            }
        })
        .collect();
    Ok(RegimeSummary {
        draw: pick,
        support: hits as f64 / n,
        regimes,
    })
}
