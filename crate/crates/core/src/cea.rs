//! Cost-effectiveness layer: toggled-treatment effects, net benefit, acceptability curves.

use serde::{Deserialize, Serialize};

use crate::analysis::parameter_ci;
use crate::chain::{DrawArray, PosteriorChain};
use crate::config::ModelConfig;
use crate::data::{validate_dataset, Covariate, Covariates, Dataset, OutcomeMode};
use crate::distributions::std_normal_cdf;
use crate::error::{Error, Result};
use crate::sampler::{fit, fit_propensity, with_propensity_column, FitOptions};
use crate::stats::{covariance, mean, variance};

pub const TREATMENT_COLUMN: &str = "t";

/// Mixed into the outcome seed to seed the propensity chain.
const PROPENSITY_SALT: u64 = 0x5851_f42d_4c95_7f2d;

/// Covariates used by the outcome model: `x`, then `t`, then optionally `ps`.
pub fn cea_design(x: &Covariates, t: &[f64], ps: Option<Vec<f64>>) -> Result<Covariates> {
    let with_t = x.with_column(Covariate::continuous(TREATMENT_COLUMN, t.to_vec()))?;
    match ps {
        Some(ps) => with_propensity_column(&with_t, ps),
        None => Ok(with_t),
    }
}

/// Propensity chain settings derived from the outcome config.
pub fn propensity_config(config: &ModelConfig) -> ModelConfig {
    let mut c = ModelConfig::probit().with_seed(config.seed ^ PROPENSITY_SALT);
    c.m = config.m;
    c
}

/// An outcome fit with the treatment among the covariates.
#[derive(Clone, Debug)]
pub struct CeaFit {
    pub chain: PosteriorChain,
    pub propensity: Option<Vec<f64>>,
    /// The design the chain was fitted on.
    pub design: Covariates,
    pub cost: usize,
    pub effect: usize,
}

/// Fit on `(x, t[, ps])`. `ps` is estimated when `use_propensity` is set.
pub fn cea_fit(dataset: &Dataset, config: &ModelConfig, use_propensity: bool) -> Result<CeaFit> {
    let ps = if use_propensity {
        let ds = validate_dataset(dataset.clone(), OutcomeMode::Continuous)?;
        let t = ds.treatment.as_ref().ok_or_else(|| Error::InvalidConfig("no treatment column".into()))?;
        Some(fit_propensity(&ds.covariates, t, &propensity_config(config))?)
    } else {
        None
    };
    cea_fit_with_scores(dataset, config, ps)
}

/// As [`cea_fit`] with precomputed propensity scores (or none).
pub fn cea_fit_with_scores(dataset: &Dataset, config: &ModelConfig, ps: Option<Vec<f64>>) -> Result<CeaFit> {
    if config.mode != OutcomeMode::Continuous {
        return Err(Error::InvalidConfig("cost-effectiveness fits need continuous outcomes".into()));
    }
    let ds = validate_dataset(dataset.clone(), OutcomeMode::Continuous)?;
    if ds.n_outcomes() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected cost and effect outcomes, got {}",
            ds.n_outcomes()
        )));
    }
    let t = ds.treatment.clone().ok_or_else(|| Error::InvalidConfig("no treatment column".into()))?;
    if t.iter().all(|&v| v == t[0]) {
        return Err(Error::AllOneTreatment);
    }
    let design = cea_design(&ds.covariates, &t, ps.clone())?;
    let t_col = ds.covariates.n_cols();
    let options = FitOptions {
        eval_sets: vec![design.with_constant(t_col, 1.0), design.with_constant(t_col, 0.0)],
        keep_forests: false,
        keep_latent: false,
    };
    let outcome_ds = Dataset {
        covariates: design.clone(),
        outcome_names: ds.outcome_names.clone(),
        outcomes: ds.outcomes.clone(),
        treatment: None,
    };
    let chain = fit(&outcome_ds, config, &options)?;
    Ok(CeaFit {
        chain,
        propensity: ps,
        design,
        cost: 0,
        effect: 1,
    })
}

/// Per-draw sample-average treatment effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeaDraws {
    pub delta_c: Vec<f64>,
    pub delta_q: Vec<f64>,
}

/// Per-draw averages of `treated - control` for cost and effect.
pub fn mate_from_fits(treated: &DrawArray, control: &DrawArray, cost: usize, effect: usize) -> CeaDraws {
    let n = treated.n as f64;
    let avg = |s: usize, j: usize| {
        treated
            .draw_outcome(s, j)
            .iter()
            .zip(control.draw_outcome(s, j))
            .map(|(a, b)| a - b)
            .sum::<f64>()
            / n
    };
    CeaDraws {
        delta_c: (0..treated.draws).map(|s| avg(s, cost)).collect(),
        delta_q: (0..treated.draws).map(|s| avg(s, effect)).collect(),
    }
}

pub fn mate(fit: &CeaFit) -> CeaDraws {
    let ev = &fit.chain.eval_fitted;
    mate_from_fits(&ev[0], &ev[1], fit.cost, fit.effect)
}

/// `λΔq - Δc` per draw.
pub fn inb(draws: &CeaDraws, lambda: f64) -> Vec<f64> {
    draws
        .delta_q
        .iter()
        .zip(&draws.delta_c)
        .map(|(q, c)| lambda * q - c)
        .collect()
}

/// 0 to 80 000 in steps of 1 000.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=80).map(|k| k as f64 * 1000.0).collect()
}

/// Fraction of draws with positive net benefit at each λ.
pub fn ceac(draws: &CeaDraws, grid: &[f64]) -> Vec<f64> {
    let s = draws.delta_c.len() as f64;
    grid.iter()
        .map(|&l| inb(draws, l).iter().filter(|&&v| v > 0.0).count() as f64 / s)
        .collect()
}

/// Probability of cost-effectiveness under joint normality of (Δq, Δc).
pub fn normal_theory_ce_probability(
    mean_q: f64,
    mean_c: f64,
    var_q: f64,
    var_c: f64,
    cov: f64,
    lambda: f64,
) -> Result<f64> {
    let v = lambda * lambda * var_q + var_c - 2.0 * lambda * cov;
    if !(v > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(std_normal_cdf((lambda * mean_q - mean_c) / v.sqrt()))
}

/// The normal-theory probability with moments taken from the draws.
pub fn normal_theory_from_draws(draws: &CeaDraws, lambda: f64) -> Result<f64> {
    normal_theory_ce_probability(
        mean(&draws.delta_q),
        mean(&draws.delta_c),
        variance(&draws.delta_q),
        variance(&draws.delta_c),
        covariance(&draws.delta_q, &draws.delta_c),
        lambda,
    )
}

/// Posterior mean with an equal-tailed interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(draws: &[f64], level: f64) -> Self {
        let (lower, upper) = parameter_ci(draws, level);
        Interval {
            mean: mean(draws),
            lower,
            upper,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.lower <= truth && truth <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InbSummary {
    pub lambda: f64,
    #[serde(flatten)]
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeaSummary {
    pub level: f64,
    pub delta_c: Interval,
    pub delta_q: Interval,
    pub inb: Vec<InbSummary>,
}

pub fn summarize_cea(draws: &CeaDraws, lambdas: &[f64], level: f64) -> CeaSummary {
    CeaSummary {
        level,
        delta_c: Interval::from_draws(&draws.delta_c, level),
        delta_q: Interval::from_draws(&draws.delta_q, level),
        inb: lambdas
            .iter()
            .map(|&l| InbSummary {
                lambda: l,
                interval: Interval::from_draws(&inb(draws, l), level),
            })
            .collect(),
    }
}

/// Per-row posterior means of the conditional effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CateSummary {
    pub lambda: f64,
    pub tau_c: Vec<f64>,
    pub tau_q: Vec<f64>,
    pub cinb: Vec<f64>,
}

pub fn cate_cinb(fit: &CeaFit, lambda: f64) -> CateSummary {
    let (t1, t0) = (&fit.chain.eval_fitted[0], &fit.chain.eval_fitted[1]);
    let (n, s) = (t1.n, t1.draws);
    let mut tau_c = vec![0.0; n];
    let mut tau_q = vec![0.0; n];
    let mut cinb = vec![0.0; n];
    for k in 0..s {
        for i in 0..n {
            let c = t1.get(k, fit.cost, i) - t0.get(k, fit.cost, i);
            let q = t1.get(k, fit.effect, i) - t0.get(k, fit.effect, i);
            tau_c[i] += c;
            tau_q[i] += q;
            cinb[i] += lambda * q - c;
        }
    }
    for v in [&mut tau_c, &mut tau_q, &mut cinb] {
        v.iter_mut().for_each(|x| *x /= s as f64);
    }
    CateSummary {
        lambda,
        tau_c,
        tau_q,
        cinb,
    }
}

/// Share of split rules on each covariate, per outcome, pooled over trees and draws.
pub fn variable_importance(chain: &PosteriorChain) -> Vec<Vec<f64>> {
    let (d, p) = (chain.d(), chain.p());
    (0..d)
        .map(|j| {
            let mut totals = vec![0u64; p];
            for s in 0..chain.retained() {
                for (t, &c) in totals.iter_mut().zip(chain.split_counts_at(s, j)) {
                    *t += u64::from(c);
                }
            }
            let all: u64 = totals.iter().sum();
            if all == 0 {
                vec![0.0; p]
            } else {
                totals.iter().map(|&c| c as f64 / all as f64).collect()
            }
        })
        .collect()
}
