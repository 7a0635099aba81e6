//! One replicate of each benchmark: generate, fit, score.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen_friedman1, gen_friedman2, gen_ttcm_like, BinarySample, CeaSample, ContinuousSample, EstimateRecord};
use crate::analysis::{accuracy, crps_outcome, interval_coverage, log_loss, parameter_ci, predictive_draws, rmse, summarize};
use crate::cea::{cea_fit_with_scores, mate, propensity_config, summarize_cea, CeaSummary};
use crate::config::ModelConfig;
use crate::data::{Covariates, OutcomeMode};
use crate::error::{Error, Result};
use crate::sampler::{fit, fit_propensity, FitOptions};
use crate::stats::mean;

/// Seeds the chain differently from the data generator.
const CHAIN_SALT: u64 = 0xd1b5_4a32_d192_ed03;

fn pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for j in 0..d {
        for k in j + 1..d {
            v.push((j, k));
        }
    }
    v
}

/// Test-set scores and Σ recovery for one continuous replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMetrics {
    /// Against observed test outcomes.
    pub rmse: Vec<f64>,
    /// Against the noise-free test means.
    pub rmse_truth: Vec<f64>,
    pub crps: Vec<f64>,
    /// 50% predictive-interval coverage of observed test outcomes.
    pub coverage: Vec<f64>,
    pub sigma_mean: Vec<f64>,
    pub sigma_true: Vec<f64>,
    pub sigma_ci: Vec<(f64, f64)>,
    /// Pairs in order (1,2), (1,3), (2,3).
    pub rho_mean: Vec<f64>,
    pub rho_true: Vec<f64>,
    pub rho_ci: Vec<(f64, f64)>,
}

/// Train and test sets of one continuous replicate.
pub fn friedman1_split(
    d: usize,
    n_train: usize,
    n_test: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<(ContinuousSample, ContinuousSample)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = gen_friedman1(n_train, d, noise_scale, &mut rng)?;
    let test = gen_friedman1(n_test, d, noise_scale, &mut rng)?;
    Ok((train, test))
}

/// Train and test sets of one binary replicate.
pub fn friedman2_split(d: usize, n_train: usize, n_test: usize, seed: u64) -> Result<(BinarySample, BinarySample)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = gen_friedman2(n_train, d, &mut rng)?;
    let test = gen_friedman2(n_test, d, &mut rng)?;
    Ok((train, test))
}

/// Treatment and outcomes of one cost-effectiveness replicate on fixed covariates.
pub fn ttcm_sample(x: &Covariates, rho: f64, seed: u64) -> Result<CeaSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_ttcm_like(x, rho, &mut rng)
}

/// Generate train and test sets with `seed`, fit on train, score on test.
pub fn friedman_continuous_replicate(
    d: usize,
    n_train: usize,
    n_test: usize,
    noise_scale: f64,
    config: &ModelConfig,
    seed: u64,
) -> Result<ContinuousMetrics> {
    let (train, test) = friedman1_split(d, n_train, n_test, noise_scale, seed)?;
    let mut cfg = config.clone().with_seed(seed ^ CHAIN_SALT);
    cfg.mode = OutcomeMode::Continuous;
    let options = FitOptions {
        eval_sets: vec![test.dataset.covariates.clone()],
        ..FitOptions::default()
    };
    let chain = fit(&train.dataset, &cfg, &options)?;
    let fitted = &chain.eval_fitted[0];
    let summary = summarize(&chain, fitted, 0.5)?;
    let pred = predictive_draws(&chain, fitted)?;
    let y = &test.dataset.outcomes;
    let mut m = ContinuousMetrics {
        rmse: Vec::new(),
        rmse_truth: Vec::new(),
        crps: Vec::new(),
        coverage: Vec::new(),
        sigma_mean: Vec::new(),
        sigma_true: Vec::new(),
        sigma_ci: Vec::new(),
        rho_mean: Vec::new(),
        rho_true: Vec::new(),
        rho_ci: Vec::new(),
    };
    for j in 0..d {
        m.rmse.push(rmse(&summary.mean[j], &y[j])?);
        m.rmse_truth.push(rmse(&summary.mean[j], &test.means[j])?);
        m.crps.push(crps_outcome(&pred, j, &y[j])?);
        m.coverage.push(interval_coverage(&summary.lower[j], &summary.upper[j], &y[j])?);
        let sds = chain.sd_draws(j);
        m.sigma_mean.push(mean(&sds));
        m.sigma_true.push(train.sigma[(j, j)].sqrt());
        m.sigma_ci.push(parameter_ci(&sds, 0.5));
    }
    for (j, k) in pairs(d) {
        let r = chain.correlation_draws(j, k);
        m.rho_mean.push(mean(&r));
        m.rho_true.push(train.sigma[(j, k)] / (train.sigma[(j, j)] * train.sigma[(k, k)]).sqrt());
        m.rho_ci.push(parameter_ci(&r, 0.5));
    }
    Ok(m)
}

/// Test-set scores and correlation recovery for one binary replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitMetrics {
    pub log_loss: Vec<f64>,
    /// Log loss of the training-set event rate.
    pub baseline_log_loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Share of test rows whose true probability lies in the 50% interval.
    pub ci_coverage: Vec<f64>,
    pub rho_mean: Vec<f64>,
    pub rho_true: Vec<f64>,
    pub rho_ci: Vec<(f64, f64)>,
    pub px_acceptance: Option<f64>,
}

pub fn friedman_probit_replicate(
    d: usize,
    n_train: usize,
    n_test: usize,
    config: &ModelConfig,
    seed: u64,
) -> Result<ProbitMetrics> {
    let (train, test) = friedman2_split(d, n_train, n_test, seed)?;
    let mut cfg = config.clone().with_seed(seed ^ CHAIN_SALT);
    cfg.mode = OutcomeMode::Probit;
    let options = FitOptions {
        eval_sets: vec![test.dataset.covariates.clone()],
        ..FitOptions::default()
    };
    let chain = fit(&train.dataset, &cfg, &options)?;
    let summary = summarize(&chain, &chain.eval_fitted[0], 0.5)?;
    let y = &test.dataset.outcomes;
    let mut m = ProbitMetrics {
        log_loss: Vec::new(),
        baseline_log_loss: Vec::new(),
        accuracy: Vec::new(),
        ci_coverage: Vec::new(),
        rho_mean: Vec::new(),
        rho_true: Vec::new(),
        rho_ci: Vec::new(),
        px_acceptance: crate::analysis::diagnostics(&chain).px_mh_acceptance,
    };
    for j in 0..d {
        m.log_loss.push(log_loss(&summary.mean[j], &y[j])?);
        let rate = mean(&train.dataset.outcomes[j]);
        m.baseline_log_loss.push(log_loss(&vec![rate; n_test], &y[j])?);
        m.accuracy.push(accuracy(&summary.mean[j], &y[j])?);
        m.ci_coverage
            .push(interval_coverage(&summary.lower[j], &summary.upper[j], &test.probabilities[j])?);
    }
    for (j, k) in pairs(d) {
        let r = chain.correlation_draws(j, k);
        m.rho_mean.push(mean(&r));
        m.rho_true.push(test.correlation[(j, k)]);
        m.rho_ci.push(parameter_ci(&r, 0.5));
    }
    Ok(m)
}

/// Model variants of the cost-effectiveness benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CeaVariant {
    /// Joint model with an estimated propensity column.
    PsSubart,
    /// Joint model without propensity scores.
    Subart,
    /// Independent per-outcome models with the propensity column.
    IndBart,
}

impl CeaVariant {
    pub fn name(self) -> &'static str {
        match self {
            CeaVariant::PsSubart => "ps-subart",
            CeaVariant::Subart => "subart",
            CeaVariant::IndBart => "ind-bart",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ps-subart" => Ok(CeaVariant::PsSubart),
            "subart" => Ok(CeaVariant::Subart),
            "ind-bart" => Ok(CeaVariant::IndBart),
            other => Err(Error::InvalidParameter(format!("unknown variant `{other}`"))),
        }
    }

    fn uses_propensity(self) -> bool {
        !matches!(self, CeaVariant::Subart)
    }
}

/// Truths and per-variant summaries of one cost-effectiveness replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeaReplicate {
    pub replicate: usize,
    pub delta_c: f64,
    pub delta_q: f64,
    pub lambdas: Vec<f64>,
    pub results: Vec<(CeaVariant, CeaSummary)>,
}

impl CeaReplicate {
    pub fn result(&self, v: CeaVariant) -> Option<&CeaSummary> {
        self.results.iter().find(|(k, _)| *k == v).map(|(_, s)| s)
    }

    pub fn true_inb(&self, lambda: f64) -> f64 {
        lambda * self.delta_q - self.delta_c
    }

    pub fn records(&self) -> Vec<EstimateRecord> {
        let mut out = Vec::new();
        for (v, s) in &self.results {
            let mut push = |estimand: String, iv: &crate::cea::Interval, truth: f64| {
                out.push(EstimateRecord {
                    replicate: self.replicate,
                    variant: v.name().to_string(),
                    estimand,
                    estimate: iv.mean,
                    truth,
                    lower: iv.lower,
                    upper: iv.upper,
                })
            };
            push("delta_c".into(), &s.delta_c, self.delta_c);
            push("delta_q".into(), &s.delta_q, self.delta_q);
            for b in &s.inb {
                push(format!("inb_{}", b.lambda), &b.interval, self.true_inb(b.lambda));
            }
        }
        out
    }
}

/// Draw treatments and outcomes on fixed covariates, then fit each variant on the same sample.
pub fn cea_replicate(
    x: &Covariates,
    rho: f64,
    variants: &[CeaVariant],
    lambdas: &[f64],
    config: &ModelConfig,
    replicate: usize,
    seed: u64,
) -> Result<CeaReplicate> {
    if variants.is_empty() {
        return Err(Error::InvalidParameter("no model variants".into()));
    }
    let sample = ttcm_sample(x, rho, seed)?;
    let mut cfg = config.clone().with_seed(seed ^ CHAIN_SALT);
    cfg.mode = OutcomeMode::Continuous;
    let ps = if variants.iter().any(|v| v.uses_propensity()) {
        let t = sample.dataset.treatment.as_ref().expect("generated with treatment");
        let ds = crate::data::validate_dataset(sample.dataset.clone(), OutcomeMode::Continuous)?;
        Some(fit_propensity(&ds.covariates, t, &propensity_config(&cfg))?)
    } else {
        None
    };
    let mut results = Vec::new();
    for &v in variants {
        let mut vc = cfg.clone();
        vc.independence = v == CeaVariant::IndBart;
        let scores = if v.uses_propensity() { ps.clone() } else { None };
        let f = cea_fit_with_scores(&sample.dataset, &vc, scores)?;
        results.push((v, summarize_cea(&mate(&f), lambdas, 0.5)));
    }
    Ok(CeaReplicate {
        replicate,
        delta_c: sample.delta_c,
        delta_q: sample.delta_q,
        lambdas: lambdas.to_vec(),
        results,
    })
}
