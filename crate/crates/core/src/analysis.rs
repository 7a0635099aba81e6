//! Point predictions, predictive intervals, scores, and chain diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{DrawArray, PosteriorChain};
use crate::data::{Covariates, OutcomeMode};
use crate::distributions::{sample_mvn, std_normal_cdf, CholeskyFactor};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted};

/// Per-row, per-outcome posterior mean and interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub level: f64,
    pub mean: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

/// Salt mixed into the chain seed for predictive-noise draws.
const NOISE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Fitted draws turned into predictive draws: Σ noise added (continuous) or Φ applied (probit).
pub fn predictive_draws(chain: &PosteriorChain, fitted: &DrawArray) -> Result<DrawArray> {
    match chain.mode() {
        OutcomeMode::Probit => Ok(fitted.map(std_normal_cdf)),
        OutcomeMode::Continuous => {
            let mut rng = ChaCha8Rng::seed_from_u64(chain.config.seed ^ NOISE_SALT);
            let (d, n) = (fitted.d, fitted.n);
            let zero = vec![0.0; d];
            let mut out = fitted.clone();
            for s in 0..fitted.draws {
                let sigma = chain.sigma_original(s);
                let noisy = if sigma.iter().all(|&v| v == 0.0) {
                    None
                } else {
                    Some(CholeskyFactor::new(&sigma)?)
                };
                for i in 0..n {
                    if let Some(chol) = &noisy {
                        let e = sample_mvn(&zero, chol, &mut rng)?;
                        for j in 0..d {
                            out.data[(s * d + j) * n + i] += e[j];
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Posterior means of `fitted` (of Φ(fit) in probit mode) with equal-tailed predictive intervals.
pub fn summarize(chain: &PosteriorChain, fitted: &DrawArray, level: f64) -> Result<PredictiveSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("interval level {level} outside (0, 1)")));
    }
    let pred = predictive_draws(chain, fitted)?;
    let centre = match chain.mode() {
        OutcomeMode::Continuous => fitted.mean(),
        OutcomeMode::Probit => pred.mean(),
    };
    let (lo_p, hi_p) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut lower = vec![vec![0.0; fitted.n]; fitted.d];
    let mut upper = lower.clone();
    for j in 0..fitted.d {
        for i in 0..fitted.n {
            let mut v = pred.row_draws(j, i);
            v.sort_by(f64::total_cmp);
            lower[j][i] = quantile_sorted(&v, lo_p);
            upper[j][i] = quantile_sorted(&v, hi_p);
        }
    }
    Ok(PredictiveSummary {
        level,
        mean: centre,
        lower,
        upper,
    })
}

/// Evaluate stored forests on new rows; needs a chain fitted with `keep_forests`.
pub fn fitted_draws_for(chain: &PosteriorChain, x: &Covariates) -> Result<DrawArray> {
    x.check_schema(&chain.covariate_schema)?;
    let forests = chain
        .forests
        .as_ref()
        .ok_or_else(|| Error::ChainFormat("chain was saved without forests".into()))?;
    let (d, n) = (chain.d(), x.n_rows());
    let mut out = DrawArray::with_capacity(d, n, forests.len());
    for draw in forests {
        let vals: Vec<Vec<f64>> = draw
            .iter()
            .enumerate()
            .map(|(j, trees)| {
                let mut v = vec![0.0; n];
                for t in trees {
                    for (i, o) in v.iter_mut().enumerate() {
                        *o += t.evaluate_with(|c| x.value(i, c));
                    }
                }
                match chain.mode() {
                    OutcomeMode::Continuous => chain.scaler.inverse_column(j, &v),
                    OutcomeMode::Probit => v,
                }
            })
            .collect();
        out.push(&vals);
    }
    Ok(out)
}

pub fn predict(chain: &PosteriorChain, x: &Covariates, level: f64) -> Result<PredictiveSummary> {
    let fitted = fitted_draws_for(chain, x)?;
    summarize(chain, &fitted, level)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// All-pairs CRPS estimate for one observation.
pub fn crps_single(draws: &[f64], y: f64) -> Result<f64> {
    let s = draws.len();
    if s < 2 {
        return Err(Error::InsufficientDraws(s));
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let sf = s as f64;
    let abs_err = v.iter().map(|x| (x - y).abs()).sum::<f64>() / sf;
    // Σ_i Σ_j |x_i - x_j| = 2 Σ_k x_(k) (2k - S + 1)
    let spread: f64 = v
        .iter()
        .enumerate()
        .map(|(k, x)| x * (2.0 * k as f64 - sf + 1.0))
        .sum::<f64>()
        / (sf * sf);
    Ok(abs_err - spread)
}

/// Mean CRPS over rows; `draws[i]` holds the predictive draws of row `i`.
pub fn crps(draws: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    if draws.len() != truth.len() {
        return Err(Error::LengthMismatch(draws.len(), truth.len()));
    }
    let total = draws
        .iter()
        .zip(truth)
        .map(|(d, &y)| crps_single(d, y))
        .sum::<Result<f64>>()?;
    Ok(total / truth.len() as f64)
}

/// CRPS of one outcome of a predictive [`DrawArray`].
pub fn crps_outcome(pred: &DrawArray, j: usize, truth: &[f64]) -> Result<f64> {
    if pred.n != truth.len() {
        return Err(Error::LengthMismatch(pred.n, truth.len()));
    }
    let mut total = 0.0;
    for (i, &y) in truth.iter().enumerate() {
        total += crps_single(&pred.row_draws(j, i), y)?;
    }
    Ok(total / truth.len() as f64)
}

const PROB_CLIP: f64 = 1e-12;

pub fn log_loss(prob: &[f64], truth: &[f64]) -> Result<f64> {
    if prob.len() != truth.len() {
        return Err(Error::LengthMismatch(prob.len(), truth.len()));
    }
    let total: f64 = prob
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / prob.len() as f64)
}

pub fn accuracy(prob: &[f64], truth: &[f64]) -> Result<f64> {
    if prob.len() != truth.len() {
        return Err(Error::LengthMismatch(prob.len(), truth.len()));
    }
    let hits = prob
        .iter()
        .zip(truth)
        .filter(|(&p, &y)| f64::from(p > 0.5) == y)
        .count();
    Ok(hits as f64 / prob.len() as f64)
}

pub fn interval_coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64> {
    if lower.len() != truth.len() || upper.len() != truth.len() {
        return Err(Error::LengthMismatch(lower.len(), truth.len()));
    }
    let inside = truth
        .iter()
        .enumerate()
        .filter(|(i, &t)| lower[*i] <= t && t <= upper[*i])
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

/// Equal-tailed interval from parameter draws.
pub fn parameter_ci(draws: &[f64], level: f64) -> (f64, f64) {
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    (
        quantile_sorted(&v, (1.0 - level) / 2.0),
        quantile_sorted(&v, (1.0 + level) / 2.0),
    )
}

/// Acceptance summaries of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub retained: usize,
    /// Fraction of tree proposals accepted, per outcome, over all iterations.
    pub tree_acceptance: Vec<f64>,
    /// PX-MH acceptance over all iterations (probit with d > 1 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub px_mh_acceptance: Option<f64>,
}

pub fn diagnostics(chain: &PosteriorChain) -> Diagnostics {
    let d = chain.d();
    let iters = chain.n_iterations();
    let m = chain.config.m as f64;
    let tree_acceptance = (0..d)
        .map(|j| {
            let acc: u64 = (0..iters).map(|it| u64::from(chain.tree_accepts[it * d + j])).sum();
            acc as f64 / (iters as f64 * m)
        })
        .collect();
    let px = (!chain.sigma_accepts.is_empty()).then(|| {
        chain.sigma_accepts.iter().filter(|&&a| a).count() as f64 / chain.sigma_accepts.len() as f64
    });
    Diagnostics {
        n_iterations: iters,
        n_burnin: chain.config.n_burnin,
        retained: chain.retained(),
        tree_acceptance,
        px_mh_acceptance: px,
    }
}

/// One trace line.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub parameter: String,
    pub value: f64,
}

/// Σ trace as error sds (original units) and correlations, every iteration.
pub fn trace_rows(chain: &PosteriorChain) -> Vec<TraceRow> {
    let d = chain.d();
    let mut out = Vec::new();
    for it in 0..chain.n_iterations() {
        let b = it * d * d;
        let s = &chain.sigma_trace[b..b + d * d];
        for j in 0..d {
            out.push(TraceRow {
                iteration: it,
                parameter: format!("sigma_{}", j + 1),
                value: s[j * d + j].sqrt() * chain.scaler.range(j),
            });
        }
        for j in 0..d {
            for k in j + 1..d {
                out.push(TraceRow {
                    iteration: it,
                    parameter: format!("rho_{}{}", j + 1, k + 1),
                    value: s[j * d + k] / (s[j * d + j] * s[k * d + k]).sqrt(),
                });
            }
        }
    }
    out
}

/// Posterior means of the error sds (original units) and correlations.
pub fn sigma_summary(chain: &PosteriorChain) -> (Vec<f64>, Vec<((usize, usize), f64)>) {
    let d = chain.d();
    let sds = (0..d).map(|j| mean(&chain.sd_draws(j))).collect();
    let mut rhos = Vec::new();
    for j in 0..d {
        for k in j + 1..d {
            rhos.push(((j, k), mean(&chain.correlation_draws(j, k))));
        }
    }
    (sds, rhos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.5, 2.5], &[1.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(rmse(&[0.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn crps_examples() {
        assert_eq!(crps_single(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!((crps_single(&[0.0, 2.0], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(crps_single(&[1.0], 0.0), Err(Error::InsufficientDraws(1))));
    }

    fn crps_brute(draws: &[f64], y: f64) -> f64 {
        let s = draws.len() as f64;
        let a = draws.iter().map(|x| (x - y).abs()).sum::<f64>() / s;
        let mut b = 0.0;
        for x in draws {
            for xx in draws {
                b += (x - xx).abs();
            }
        }
        a - 0.5 * b / (s * s)
    }

    proptest! {
        #[test]
        fn crps_matches_double_loop(draws in prop::collection::vec(-100.0f64..100.0, 2..20), y in -100.0f64..100.0) {
            let fast = crps_single(&draws, y).unwrap();
            prop_assert!((fast - crps_brute(&draws, y)).abs() < 1e-12 * (1.0 + fast.abs()) * 100.0);
            prop_assert!(fast >= -1e-12);
        }

        #[test]
        fn nested_intervals(draws in prop::collection::vec(-10.0f64..10.0, 2..200)) {
            let (l50, u50) = parameter_ci(&draws, 0.5);
            let (l90, u90) = parameter_ci(&draws, 0.9);
            prop_assert!(l90 <= l50 && u50 <= u90);
        }
    }

    #[test]
    fn log_loss_examples() {
        assert!((log_loss(&[0.5; 4], &[0.0, 1.0, 1.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(log_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() <= 1e-11);
        assert_eq!(accuracy(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        let want = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((log_loss(&[0.9, 0.2], &[1.0, 0.0]).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.164252).abs() < 1e-6);
    }

    #[test]
    fn coverage_and_ci() {
        assert_eq!(interval_coverage(&[0.0, 0.0], &[1.0, 1.0], &[0.5, 1.0]).unwrap(), 1.0);
        let grid: Vec<f64> = (1..100_000)
            .map(|k| {
                let p = k as f64 / 100_000.0;
                statrs::distribution::ContinuousCDF::inverse_cdf(&statrs::distribution::Normal::standard(), p)
            })
            .collect();
        let (lo, hi) = parameter_ci(&grid, 0.5);
        assert!((lo + 0.674).abs() < 0.001 && (hi - 0.674).abs() < 0.001);
        assert!(lo < 0.0 && 0.0 < hi);
    }
}
