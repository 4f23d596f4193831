#![allow(dead_code)]

use std::io::Write;

use nalgebra::{DMatrix, DVector};

/// Writes a result line straight to stderr so it shows up even when the
/// harness captures test output.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2} [{verdict}] {name}: {detail}");
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of a chain mean from non-overlapping batch means.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    (var(&means) / batches as f64).sqrt()
}

/// Monte Carlo check of a sample against target moments: the mean within `k`
/// standard errors and the variance within `k` standard errors of the sample
/// variance, given the target's fourth central moment.
#[derive(Debug, Clone, Copy)]
pub struct MomentCheck {
    pub mean_z: f64,
    pub var_z: f64,
}

impl MomentCheck {
    pub fn new(xs: &[f64], target_mean: f64, target_var: f64, target_m4: f64) -> Self {
        let n = xs.len() as f64;
        let m = mean(xs);
        let v = var(xs);
        MomentCheck {
            mean_z: (m - target_mean) / (target_var / n).sqrt(),
            var_z: (v - target_var) / ((target_m4 - target_var * target_var) / n).sqrt(),
        }
    }

    pub fn gaussian(xs: &[f64], target_mean: f64, target_var: f64) -> Self {
        Self::new(xs, target_mean, target_var, 3.0 * target_var * target_var)
    }

    pub fn worst(&self) -> f64 {
        self.mean_z.abs().max(self.var_z.abs())
    }
}

/// Posterior of `b` in `r = D b + e`, `e ~ N(0, diag(w))`, `b ~ N(0, diag(prior))`.
pub fn gaussian_regression(d: &DMatrix<f64>, r: &[f64], w: &[f64], prior: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let p = d.ncols();
    let mut prec = DMatrix::from_diagonal(&DVector::from_iterator(p, prior.iter().map(|v| 1.0 / v)));
    let mut rhs = DVector::zeros(p);
    for t in 0..d.nrows() {
        for i in 0..p {
            rhs[i] += d[(t, i)] * r[t] / w[t];
            for j in 0..p {
                prec[(i, j)] += d[(t, i)] * d[(t, j)] / w[t];
            }
        }
    }
    let cov = prec.try_inverse().expect("posterior precision is invertible");
    (&cov * rhs, cov)
}

/// Average ranks (ties share their mean rank) of the pooled sample, scaled to (0, 1).
pub fn pooled_uniform_scores(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len() + b.len();
    let mut idx: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..n).collect();
    idx.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut score = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && idx[j].0 == idx[i].0 {
            j += 1;
        }
        let r = 0.5 * (i + j - 1) as f64 + 0.5;
        for item in &idx[i..j] {
            score[item.1] = r / n as f64;
        }
        i = j;
    }
    let (sa, sb) = score.split_at(a.len());
    (sa.to_vec(), sb.to_vec())
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
