//! Seeded data generators for the benchmark scenarios and a replicate runner.

mod experiments;
mod runner;

pub use experiments::{
    cea_replicate, friedman1_split, friedman2_split, friedman_continuous_replicate, friedman_probit_replicate,
    ttcm_sample, CeaReplicate, CeaVariant, ContinuousMetrics, ProbitMetrics,
};
pub use runner::{aggregate, replicate_seed, run_replicates, AggregateRow, EstimateRecord};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Covariate, Covariates, Dataset};
use crate::distributions::{covariance_from_sd_corr, sample_mvn, std_normal_cdf, CholeskyFactor};
use crate::error::{Error, Result};
use crate::stats::{mean, sd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Friedman1,
    Friedman2,
    TtcmLike,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("d must be 2 or 3, got {d}")))
    }
}

/// Error covariance of the continuous benchmark.
pub fn friedman1_sigma(d: usize) -> Result<DMatrix<f64>> {
    check_dim(d)?;
    Ok(if d == 2 {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.75, 0.75, 1.0]);
        covariance_from_sd_corr(&[1.0, 10.0], &corr)
    } else {
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.5, 0.8, 1.0, 0.25, 0.5, 0.25, 1.0]);
        covariance_from_sd_corr(&[1.0, 2.5, 5.0], &corr)
    })
}

/// Latent correlation of the binary benchmark (unit variances).
pub fn friedman2_correlation(d: usize) -> Result<DMatrix<f64>> {
    check_dim(d)?;
    let mut s = friedman1_sigma(d)?;
    let sds: Vec<f64> = (0..d).map(|j| s[(j, j)].sqrt()).collect();
    for r in 0..d {
        for c in 0..d {
            s[(r, c)] /= sds[r] * sds[c];
        }
    }
    Ok(s)
}

pub fn friedman1_mean(x: &[f64]) -> [f64; 3] {
    use std::f64::consts::PI;
    [
        10.0 * (x[0] * x[1] * PI).sin() + 20.0 * (x[2] - 0.5).powi(2),
        8.0 * x[3] + 20.0 * (x[0] * PI).sin(),
        10.0 * x[4] - 5.0 * x[1] - 5.0 * x[3],
    ]
}

pub fn friedman2_mean(x: &[f64]) -> [f64; 3] {
    use std::f64::consts::PI;
    [
        (x[0] * x[1] * PI).sin() + x[2].powi(3),
        -1.0 + 2.0 * x[0] * x[3] + x[4].exp(),
        0.5 * (x[1] + x[3]) + x[4],
    ]
}

pub const FRIEDMAN_P: usize = 10;

fn uniform_rows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; FRIEDMAN_P]> {
    (0..n)
        .map(|_| {
            let mut r = [0.0; FRIEDMAN_P];
            r.iter_mut().for_each(|v| *v = rng.random());
            r
        })
        .collect()
}

fn to_covariates(rows: &[[f64; FRIEDMAN_P]]) -> Covariates {
    Covariates {
        columns: (0..FRIEDMAN_P)
            .map(|k| Covariate::continuous(format!("x{}", k + 1), rows.iter().map(|r| r[k]).collect()))
            .collect(),
    }
}

fn outcome_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("y{j}")).collect()
}

/// A generated continuous sample with its noise-free means.
#[derive(Clone, Debug)]
pub struct ContinuousSample {
    pub dataset: Dataset,
    /// `means[j][i]`.
    pub means: Vec<Vec<f64>>,
    pub sigma: DMatrix<f64>,
}

/// `n` rows of the continuous benchmark. `noise_scale` multiplies the error sds (1 for the standard setting).
pub fn gen_friedman1<R: Rng + ?Sized>(n: usize, d: usize, noise_scale: f64, rng: &mut R) -> Result<ContinuousSample> {
    let sigma = friedman1_sigma(d)? * (noise_scale * noise_scale);
    let rows = uniform_rows(n, rng);
    let means: Vec<Vec<f64>> = (0..d)
        .map(|j| rows.iter().map(|r| friedman1_mean(r)[j]).collect())
        .collect();
    let mut outcomes = means.clone();
    if noise_scale > 0.0 {
        let chol = CholeskyFactor::new(&sigma)?;
        let zero = vec![0.0; d];
        for i in 0..n {
            let e = sample_mvn(&zero, &chol, rng)?;
            for j in 0..d {
                outcomes[j][i] += e[j];
            }
        }
    }
    Ok(ContinuousSample {
        dataset: Dataset {
            covariates: to_covariates(&rows),
            outcome_names: outcome_names(d),
            outcomes,
            treatment: None,
        },
        means,
        sigma,
    })
}

/// A generated binary sample with latent means and true probabilities.
#[derive(Clone, Debug)]
pub struct BinarySample {
    pub dataset: Dataset,
    pub latent_means: Vec<Vec<f64>>,
    /// `Φ(latent mean)`.
    pub probabilities: Vec<Vec<f64>>,
    pub correlation: DMatrix<f64>,
}

pub fn gen_friedman2<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<BinarySample> {
    let corr = friedman2_correlation(d)?;
    let chol = CholeskyFactor::new(&corr)?;
    let rows = uniform_rows(n, rng);
    let latent_means: Vec<Vec<f64>> = (0..d)
        .map(|j| rows.iter().map(|r| friedman2_mean(r)[j]).collect())
        .collect();
    let mut outcomes = vec![vec![0.0; n]; d];
    let zero = vec![0.0; d];
    for i in 0..n {
        let e = sample_mvn(&zero, &chol, rng)?;
        for j in 0..d {
            outcomes[j][i] = f64::from(latent_means[j][i] + e[j] > 0.0);
        }
    }
    let probabilities = latent_means
        .iter()
        .map(|c| c.iter().map(|&m| std_normal_cdf(m)).collect())
        .collect();
    Ok(BinarySample {
        dataset: Dataset {
            covariates: to_covariates(&rows),
            outcome_names: outcome_names(d),
            outcomes,
            treatment: None,
        },
        latent_means,
        probabilities,
        correlation: corr,
    })
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

fn lognormal_matching(mean: f64, sd: f64) -> LogNormal<f64> {
    let s2 = (1.0 + (sd / mean).powi(2)).ln();
    LogNormal::new(mean.ln() - s2 / 2.0, s2.sqrt()).expect("valid lognormal")
}

fn gamma_matching(mean: f64, sd: f64) -> Gamma<f64> {
    Gamma::new((mean / sd).powi(2), sd * sd / mean).expect("valid gamma")
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Eleven synthetic baseline covariates with trial-like marginals, in the order
/// age, gender, education, medical history, trauma type, fracture region,
/// injury severity, hospital admission, length of stay, surgery, TTO.
pub fn ttcm_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Covariates {
    let age_dist = Normal::new(46.0, 17.0).expect("valid normal");
    let age: Vec<f64> = (0..n)
        .map(|_| loop {
            let a = age_dist.sample(rng);
            if (18.0..=90.0).contains(&a) {
                break a;
            }
        })
        .collect();
    let bern = |p: f64, rng: &mut R| -> Vec<f64> { (0..n).map(|_| f64::from(rng.random::<f64>() < p)).collect() };
    let gender = bern(0.5, rng);
    let education: Vec<usize> = (0..n).map(|_| categorical(&[0.10, 0.26, 0.64], rng)).collect();
    let history: Vec<usize> = (0..n).map(|_| categorical(&[0.59, 0.19, 0.21], rng)).collect();
    let trauma: Vec<usize> = (0..n)
        .map(|_| categorical(&[69.0 / 140.0, 2.0 / 140.0, 44.0 / 140.0, 20.0 / 140.0, 5.0 / 140.0], rng))
        .collect();
    let fracture: Vec<usize> = (0..n)
        .map(|_| categorical(&[56.0 / 140.0, 60.0 / 140.0, 8.0 / 140.0, 16.0 / 140.0], rng))
        .collect();
    let iss = lognormal_matching(8.2, 5.2);
    let severity: Vec<f64> = (0..n).map(|_| iss.sample(rng)).collect();
    let admission = bern(0.65, rng);
    let los = lognormal_matching(8.3, 8.5);
    let stay: Vec<f64> = (0..n).map(|_| los.sample(rng)).collect();
    let surgery = bern(0.53, rng);
    let tto_dist = gamma_matching(20.3, 15.1);
    let tto: Vec<f64> = (0..n).map(|_| tto_dist.sample(rng)).collect();
    Covariates {
        columns: vec![
            Covariate::continuous("age", age),
            Covariate::continuous("gender", gender),
            Covariate::categorical("education", labels(&["low", "middle", "high"]), education),
            Covariate::categorical(
                "medical_history",
                labels(&["none", "chronic", "musculoskeletal"]),
                history,
            ),
            Covariate::categorical(
                "trauma_type",
                labels(&["traffic", "work", "fall", "sports", "other"]),
                trauma,
            ),
            Covariate::categorical(
                "fracture_region",
                labels(&["upper", "lower", "vertebral", "multitrauma"]),
                fracture,
            ),
            Covariate::continuous("injury_severity", severity),
            Covariate::continuous("hospital_admission", admission),
            Covariate::continuous("length_of_stay", stay),
            Covariate::continuous("surgery", surgery),
            Covariate::continuous("tto", tto),
        ],
    }
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let (m, s) = (mean(v), sd(v));
    v.iter().map(|x| (x - m) / s).collect()
}

pub fn ttcm_mu_c(x1: f64, x3: f64, x10: f64) -> f64 {
    2000.0 + 500.0 * x1 - 200.0 * x3 + 500.0 * x10
}

pub fn ttcm_mu_q(x1: f64, x2: f64) -> f64 {
    0.5 + 0.2 * (x2 + 1.0) * x1.sin()
}

pub const TTCM_TAU_C: f64 = 500.0;

pub fn ttcm_tau_q(x11: f64) -> f64 {
    -0.1 + 0.1 * (-x11).exp()
}

/// Targeted-selection propensity from the standardised untreated effect mean.
pub fn ttcm_propensity(x10: f64, mu_q_std: f64) -> f64 {
    0.9 * std_normal_cdf(-0.5 + x10 - 1.5 * mu_q_std) + 0.05
}

/// A generated cost-effectiveness sample and its sample-level truths.
#[derive(Clone, Debug)]
pub struct CeaSample {
    /// Outcomes `c`, `q`; treatment attached.
    pub dataset: Dataset,
    pub propensity: Vec<f64>,
    pub tau_q: Vec<f64>,
    pub delta_c: f64,
    pub delta_q: f64,
}

impl CeaSample {
    pub fn true_inb(&self, lambda: f64) -> f64 {
        lambda * self.delta_q - self.delta_c
    }
}

/// Treatments and outcomes drawn on fixed covariates `x` (the layout of [`ttcm_covariates`]).
pub fn gen_ttcm_like<R: Rng + ?Sized>(x: &Covariates, rho: f64, rng: &mut R) -> Result<CeaSample> {
    if x.n_cols() != 11 {
        return Err(Error::DimensionMismatch(format!("expected 11 covariates, got {}", x.n_cols())));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho {rho} outside (-1, 1)")));
    }
    let n = x.n_rows();
    let col = |k: usize| x.columns[k].values.clone();
    let x1 = standardize(&col(0));
    let x2 = col(1);
    let x3 = standardize(&col(2));
    let x10 = col(9);
    let x11 = standardize(&col(10));
    let mu_c: Vec<f64> = (0..n).map(|i| ttcm_mu_c(x1[i], x3[i], x10[i])).collect();
    let mu_q: Vec<f64> = (0..n).map(|i| ttcm_mu_q(x1[i], x2[i])).collect();
    let tau_q: Vec<f64> = x11.iter().map(|&v| ttcm_tau_q(v)).collect();
    let mu_q_std = standardize(&mu_q);
    let propensity: Vec<f64> = (0..n).map(|i| ttcm_propensity(x10[i], mu_q_std[i])).collect();
    let t: Vec<f64> = propensity.iter().map(|&p| f64::from(rng.random::<f64>() < p)).collect();
    let sds = [500.0, 0.05];
    let corr = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let chol = CholeskyFactor::new(&covariance_from_sd_corr(&sds, &corr))?;
    let mut c = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let e = sample_mvn(&[0.0, 0.0], &chol, rng)?;
        c.push(mu_c[i] + t[i] * TTCM_TAU_C + e[0]);
        q.push(mu_q[i] + t[i] * tau_q[i] + e[1]);
    }
    let delta_q = mean(&tau_q);
    Ok(CeaSample {
        dataset: Dataset {
            covariates: x.clone(),
            outcome_names: vec!["c".into(), "q".into()],
            outcomes: vec![c, q],
            treatment: Some(t),
        },
        propensity,
        tau_q,
        delta_c: TTCM_TAU_C,
        delta_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn friedman1_mean_values() {
        let m = friedman1_mean(&[0.5; 10]);
        let want = [7.071_068, 24.0, 0.0];
        for j in 0..3 {
            assert!((m[j] - want[j]).abs() < 1e-6, "{m:?}");
        }
        assert_eq!(friedman1_mean(&[0.0; 10]), [5.0, 0.0, 0.0]);
    }

    #[test]
    fn friedman2_mean_values() {
        assert_eq!(friedman2_mean(&[0.0; 10]), [0.0, 0.0, 0.0]);
        let m = friedman2_mean(&[1.0; 10]);
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!((m[1] - (1.0 + std::f64::consts::E)).abs() < 1e-12);
        assert!((m[2] - 2.0).abs() < 1e-12);
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn friedman1_noise_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2, 3] {
            let s = gen_friedman1(100_000, d, 1.0, &mut rng).unwrap();
            let e: Vec<Vec<f64>> = (0..d)
                .map(|j| s.dataset.outcomes[j].iter().zip(&s.means[j]).map(|(y, m)| y - m).collect())
                .collect();
            for j in 0..d {
                for k in j + 1..d {
                    let r = crate::stats::correlation(&e[j], &e[k]);
                    let truth = s.sigma[(j, k)] / (s.sigma[(j, j)] * s.sigma[(k, k)]).sqrt();
                    assert!((r - truth).abs() < 0.01, "{d} {j}{k}: {r}");
                }
            }
        }
    }

    #[test]
    fn friedman2_class_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = gen_friedman2(100_000, 2, &mut rng).unwrap();
        let observed = mean(&s.dataset.outcomes[1]);
        let expected = mean(&s.probabilities[1]);
        assert!((observed - expected).abs() < 0.01);
        assert!(s.dataset.outcomes.iter().flatten().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn ttcm_pieces() {
        assert!(ttcm_tau_q(0.0).abs() < 1e-15);
        assert!((ttcm_tau_q(60.0) + 0.1).abs() < 1e-12);
        assert!((ttcm_propensity(0.5, 0.0) - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ttcm_covariates(140, &mut rng);
        assert_eq!((x.n_rows(), x.n_cols()), (140, 11));
        let s = gen_ttcm_like(&x, -0.25, &mut rng).unwrap();
        assert!(s.propensity.iter().all(|&p| (0.05..=0.95).contains(&p)));
        assert_eq!(s.delta_c, 500.0);
        assert!((s.true_inb(20_000.0) - (20_000.0 * s.delta_q - 500.0)).abs() < 1e-12);
        let t = s.dataset.treatment.as_ref().unwrap();
        let share = mean(t);
        assert!(share > 0.2 && share < 0.8, "{share}");
    }

    #[test]
    fn ttcm_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = ttcm_covariates(50_000, &mut rng);
        let age = &x.columns[0].values;
        assert!(age.iter().all(|a| (18.0..=90.0).contains(a)));
        assert!((mean(&x.columns[6].values) - 8.2).abs() < 0.15);
        assert!((sd(&x.columns[6].values) - 5.2).abs() < 0.3);
        assert!((mean(&x.columns[10].values) - 20.3).abs() < 0.3);
        assert!((sd(&x.columns[10].values) - 15.1).abs() < 0.3);
        assert!((mean(&x.columns[9].values) - 0.53).abs() < 0.01);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = gen_friedman1(50, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(replicate_seed(7, 3))).unwrap();
        let b = gen_friedman1(50, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(replicate_seed(7, 3))).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }
}
