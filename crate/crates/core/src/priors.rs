//! Prior construction and calibration.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::config::ModelConfig;
use crate::data::{ColumnKind, Covariates, OutcomeMode};
use crate::error::{Error, Result};

/// Probability that a node at `depth` is non-terminal.
pub fn tree_split_probability(depth: usize, alpha: f64, beta: f64) -> f64 {
    alpha * (1.0 + depth as f64).powf(-beta)
}

/// Standard deviation of the leaf-parameter prior.
pub fn leaf_prior_sd(mode: OutcomeMode, m: usize, kappa: f64, q_z: f64) -> f64 {
    let root_m = (m as f64).sqrt();
    match mode {
        OutcomeMode::Continuous => 1.0 / (2.0 * kappa * root_m),
        OutcomeMode::Probit => q_z / (kappa * root_m),
    }
}

/// CDF at `x` of `A·|T|`, `T ~ t_ν`.
pub fn half_t_cdf(x: f64, nu: f64, a: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if nu == 2.0 {
        return x / (2.0 * a * a + x * x).sqrt();
    }
    let t = x / a;
    1.0 - beta_reg(nu / 2.0, 0.5, nu / (nu + t * t))
}

const MAX_DOUBLINGS: usize = 200;

/// Solve `half_t_cdf(sigma_hat, nu, A) = alpha_sigma` for `A`.
pub fn calibrate_half_t_scale(sigma_hat: f64, nu: f64, alpha_sigma: f64) -> Result<f64> {
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma_hat {sigma_hat} must be positive")));
    }
    if !(alpha_sigma > 0.0 && alpha_sigma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha_sigma {alpha_sigma} must lie in (0, 1)"
        )));
    }
    // the CDF at fixed x decreases in A
    let f = |a: f64| half_t_cdf(sigma_hat, nu, a) - alpha_sigma;
    let (mut lo, mut hi) = (sigma_hat, sigma_hat);
    let mut steps = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_DOUBLINGS {
            return Err(Error::RootNotBracketed(steps));
        }
    }
    while f(lo) < 0.0 {
        lo /= 2.0;
        steps += 1;
        if steps > MAX_DOUBLINGS {
            return Err(Error::RootNotBracketed(steps));
        }
    }
    while (hi - lo) > 1e-10 * lo {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Unnormalised log density of a correlation under the hierarchical covariance prior.
pub fn implied_correlation_log_density(rho: f64, nu: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::OutOfSupport(rho));
    }
    Ok((nu / 2.0 - 1.0) * (1.0 - rho * rho).ln())
}

/// Intercept plus continuous columns plus `L - 1` dummies per categorical.
pub fn dummy_design(x: &Covariates) -> DMatrix<f64> {
    let n = x.n_rows();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for c in &x.columns {
        match &c.kind {
            ColumnKind::Continuous => cols.push(c.values.clone()),
            ColumnKind::Categorical { levels } => {
                for lv in 1..levels.len() {
                    cols.push(c.values.iter().map(|&v| f64::from(v as usize == lv)).collect());
                }
            }
        }
    }
    DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

fn all_constant(design: &DMatrix<f64>) -> bool {
    (1..design.ncols()).all(|c| {
        let col = design.column(c);
        col.iter().all(|&v| v == col[0])
    })
}

/// Residual sd from least squares; `None` when the residual degrees of freedom vanish.
fn ols_residual_sd(design: &DMatrix<f64>, y: &[f64]) -> Option<f64> {
    let n = design.nrows();
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(design.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if n <= rank {
        return None;
    }
    let yv = DVector::from_column_slice(y);
    let beta = svd.solve(&yv, tol).ok()?;
    let resid = yv - design * beta;
    Some((resid.norm_squared() / (n - rank) as f64).sqrt())
}

struct Standardized {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

fn standardize(design: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> (Standardized, Vec<(f64, f64)>, f64) {
    // drop the intercept column; center y
    let p = design.ncols() - 1;
    let n = rows.len() as f64;
    let y_mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let mut params = Vec::with_capacity(p);
    let x = DMatrix::from_fn(rows.len(), p, |_, _| 0.0);
    let mut x = x;
    for c in 0..p {
        let col: Vec<f64> = rows.iter().map(|&r| design[(r, c + 1)]).collect();
        let m = col.iter().sum::<f64>() / n;
        let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        let s = if s > 0.0 { s } else { 1.0 };
        for (i, v) in col.iter().enumerate() {
            x[(i, c)] = (v - m) / s;
        }
        params.push((m, s));
    }
    let yc = rows.iter().map(|&r| y[r] - y_mean).collect();
    (Standardized { x, y: yc }, params, y_mean)
}

/// Coordinate descent for `(1/2n)|y - Xb|² + λ|b|₁` on standardized columns, warm-started.
fn lasso_cd(s: &Standardized, lambda: f64, beta: &mut [f64]) {
    let (n, p) = (s.x.nrows(), s.x.ncols());
    let nf = n as f64;
    let mut resid: Vec<f64> = s.y.clone();
    for c in 0..p {
        if beta[c] != 0.0 {
            for i in 0..n {
                resid[i] -= s.x[(i, c)] * beta[c];
            }
        }
    }
    let col_ss: Vec<f64> = (0..p)
        .map(|c| s.x.column(c).iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    for _ in 0..1000 {
        let mut max_delta: f64 = 0.0;
        for c in 0..p {
            if col_ss[c] == 0.0 {
                continue;
            }
            let rho = (0..n).map(|i| s.x[(i, c)] * resid[i]).sum::<f64>() / nf + col_ss[c] * beta[c];
            let new = soft_threshold(rho, lambda) / col_ss[c];
            let delta = new - beta[c];
            if delta != 0.0 {
                for i in 0..n {
                    resid[i] -= s.x[(i, c)] * delta;
                }
                beta[c] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-8 {
            break;
        }
    }
}

fn soft_threshold(x: f64, l: f64) -> f64 {
    if x > l {
        x - l
    } else if x < -l {
        x + l
    } else {
        0.0
    }
}

const LASSO_FOLDS: usize = 5;
const LASSO_PATH: usize = 50;

fn lambda_path(s: &Standardized) -> Vec<f64> {
    let n = s.x.nrows() as f64;
    let lmax = (0..s.x.ncols())
        .map(|c| (s.x.column(c).iter().zip(&s.y).map(|(a, b)| a * b).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    (0..LASSO_PATH)
        .map(|k| lmax * 1e-3f64.powf(k as f64 / (LASSO_PATH - 1) as f64))
        .collect()
}

/// LASSO residual sd with the penalty chosen by 5-fold cross-validation.
fn lasso_residual_sd(design: &DMatrix<f64>, y: &[f64], seed: u64) -> f64 {
    let n = design.nrows();
    let all: Vec<usize> = (0..n).collect();
    let (full, _, _) = standardize(design, y, &all);
    let path = lambda_path(&full);

    let mut order = all.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0usize; n];
    for (k, &r) in order.iter().enumerate() {
        fold[r] = k % LASSO_FOLDS;
    }
    let mut cv_err = vec![0.0; path.len()];
    for f in 0..LASSO_FOLDS {
        let train: Vec<usize> = all.iter().copied().filter(|&r| fold[r] != f).collect();
        let test: Vec<usize> = all.iter().copied().filter(|&r| fold[r] == f).collect();
        if train.len() < 2 || test.is_empty() {
            continue;
        }
        let (s, params, y_mean) = standardize(design, y, &train);
        let mut beta = vec![0.0; s.x.ncols()];
        for (k, &lam) in path.iter().enumerate() {
            lasso_cd(&s, lam, &mut beta);
            for &r in &test {
                let mut pred = y_mean;
                for (c, &(m, sd)) in params.iter().enumerate() {
                    pred += beta[c] * (design[(r, c + 1)] - m) / sd;
                }
                cv_err[k] += (y[r] - pred).powi(2);
            }
        }
    }
    let best = cv_err
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut beta = vec![0.0; full.x.ncols()];
    for &lam in &path[..=best] {
        lasso_cd(&full, lam, &mut beta);
    }
    let nnz = beta.iter().filter(|b| **b != 0.0).count();
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..full.x.ncols()).map(|c| full.x[(i, c)] * beta[c]).sum();
            (full.y[i] - fit).powi(2)
        })
        .sum();
    let dof = n.saturating_sub(nnz + 1).max(1);
    (rss / dof as f64).sqrt()
}

/// Per-outcome residual sd of a linear fit on all covariates (scaled outcomes).
pub fn estimate_sigma_hat(x: &Covariates, outcomes: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    let design = dummy_design(x);
    if all_constant(&design) {
        return Err(Error::DegenerateDesign("every covariate is constant".into()));
    }
    let n = design.nrows();
    let p_enc = design.ncols() - 1;
    outcomes
        .iter()
        .enumerate()
        .map(|(j, y)| {
            let s = if n <= p_enc + 1 {
                lasso_residual_sd(&design, y, seed.wrapping_add(j as u64))
            } else {
                match ols_residual_sd(&design, y) {
                    Some(s) => s,
                    None => lasso_residual_sd(&design, y, seed.wrapping_add(j as u64)),
                }
            };
            if s > 0.0 && s.is_finite() {
                Ok(s)
            } else {
                Err(Error::DegenerateDesign(format!(
                    "outcome {j} is fitted exactly by a linear model"
                )))
            }
        })
        .collect()
}

/// Calibrated hyperparameters for one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPriors {
    /// Half-t scales; empty in probit mode.
    pub a: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub leaf_sd: f64,
    pub nu: f64,
    pub alpha_sigma: f64,
    pub kappa: f64,
    pub q_z: f64,
}

/// Calibrate priors. `outcomes` must already be on the sampler's scale.
pub fn calibrate_priors(
    x: &Covariates,
    outcomes: &[Vec<f64>],
    config: &ModelConfig,
) -> Result<CalibratedPriors> {
    let leaf_sd = leaf_prior_sd(config.mode, config.m, config.kappa, config.q_z);
    let (sigma_hat, a) = match config.mode {
        OutcomeMode::Continuous => {
            let sh = estimate_sigma_hat(x, outcomes, config.seed)?;
            let a = sh
                .iter()
                .map(|&s| calibrate_half_t_scale(s, config.nu, config.alpha_sigma))
                .collect::<Result<Vec<_>>>()?;
            (sh, a)
        }
        OutcomeMode::Probit => (vec![], vec![]),
    };
    Ok(CalibratedPriors {
        a,
        sigma_hat,
        leaf_sd,
        nu: config.nu,
        alpha_sigma: config.alpha_sigma,
        kappa: config.kappa,
        q_z: config.q_z,
    })
}
