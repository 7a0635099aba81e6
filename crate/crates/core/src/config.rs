use serde::{Deserialize, Serialize};

use crate::data::OutcomeMode;
use crate::error::{Error, Result};

/// Sampler and prior settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Trees per outcome.
    pub m: usize,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub alpha_sigma: f64,
    pub q_z: f64,
    pub n_mcmc: usize,
    pub n_burnin: usize,
    /// PX-MH proposal degrees of freedom; `None` picks the size-based default.
    pub nu_prop: Option<f64>,
    pub mode: OutcomeMode,
    /// Force a diagonal Σ (independent BART per outcome).
    pub independence: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn defaults(mode: OutcomeMode) -> Self {
        let (n_mcmc, n_burnin) = match mode {
            OutcomeMode::Continuous => (5000, 1000),
            OutcomeMode::Probit => (10000, 2000),
        };
        ModelConfig {
            m: 100,
            kappa: 2.0,
            alpha: 0.95,
            beta: 2.0,
            nu: 2.0,
            alpha_sigma: 0.95,
            q_z: 3.0,
            n_mcmc,
            n_burnin,
            nu_prop: None,
            mode,
            independence: false,
            seed: 1,
        }
    }

    pub fn continuous() -> Self {
        Self::defaults(OutcomeMode::Continuous)
    }

    pub fn probit() -> Self {
        Self::defaults(OutcomeMode::Probit)
    }

    pub fn with_iterations(mut self, n_mcmc: usize, n_burnin: usize) -> Self {
        self.n_mcmc = n_mcmc;
        self.n_burnin = n_burnin;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn retained(&self) -> usize {
        self.n_mcmc - self.n_burnin
    }

    /// n/10 for d = 2, n/2 otherwise.
    pub fn resolved_nu_prop(&self, n: usize, d: usize) -> f64 {
        self.nu_prop.unwrap_or(if d == 2 {
            n as f64 / 10.0
        } else {
            n as f64 / 2.0
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.nu >= 1.0) {
            return bad(format!("nu must be at least 1, got {}", self.nu));
        }
        if !(self.alpha_sigma > 0.0 && self.alpha_sigma < 1.0) {
            return bad(format!("alpha_sigma must lie in (0, 1), got {}", self.alpha_sigma));
        }
        if !(self.q_z > 0.0) {
            return bad(format!("q_z must be positive, got {}", self.q_z));
        }
        if self.n_burnin >= self.n_mcmc {
            return bad(format!(
                "n_burnin ({}) must be below n_mcmc ({})",
                self.n_burnin, self.n_mcmc
            ));
        }
        if let Some(np) = self.nu_prop {
            if !np.is_finite() || np <= 0.0 {
                return bad(format!("nu_prop must be positive, got {np}"));
            }
        }
        Ok(())
    }

    /// Checks that depend on the data shape.
    pub fn validate_for(&self, n: usize, d: usize) -> Result<()> {
        self.validate()?;
        if self.mode == OutcomeMode::Probit && d > 1 && !self.independence {
            let np = self.resolved_nu_prop(n, d);
            if np <= d as f64 - 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "nu_prop ({np}) must exceed d - 1 = {}",
                    d - 1
                )));
            }
        }
        Ok(())
    }
}

/// Optional overrides, as read from a JSON config file or command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub m: Option<usize>,
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub nu: Option<f64>,
    pub alpha_sigma: Option<f64>,
    pub q_z: Option<f64>,
    pub n_mcmc: Option<usize>,
    pub n_burnin: Option<usize>,
    pub nu_prop: Option<f64>,
    pub mode: Option<OutcomeMode>,
    pub independence: Option<bool>,
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            m: self.m.or(lower.m),
            kappa: self.kappa.or(lower.kappa),
            alpha: self.alpha.or(lower.alpha),
            beta: self.beta.or(lower.beta),
            nu: self.nu.or(lower.nu),
            alpha_sigma: self.alpha_sigma.or(lower.alpha_sigma),
            q_z: self.q_z.or(lower.q_z),
            n_mcmc: self.n_mcmc.or(lower.n_mcmc),
            n_burnin: self.n_burnin.or(lower.n_burnin),
            nu_prop: self.nu_prop.or(lower.nu_prop),
            mode: self.mode.or(lower.mode),
            independence: self.independence.or(lower.independence),
            seed: self.seed.or(lower.seed),
        }
    }

    /// Apply on top of the mode's defaults.
    pub fn resolve(&self, fallback_mode: OutcomeMode) -> ModelConfig {
        let mode = self.mode.unwrap_or(fallback_mode);
        let d = ModelConfig::defaults(mode);
        ModelConfig {
            m: self.m.unwrap_or(d.m),
            kappa: self.kappa.unwrap_or(d.kappa),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            nu: self.nu.unwrap_or(d.nu),
            alpha_sigma: self.alpha_sigma.unwrap_or(d.alpha_sigma),
            q_z: self.q_z.unwrap_or(d.q_z),
            n_mcmc: self.n_mcmc.unwrap_or(d.n_mcmc),
            n_burnin: self.n_burnin.unwrap_or(d.n_burnin),
            nu_prop: self.nu_prop.or(d.nu_prop),
            mode,
            independence: self.independence.unwrap_or(d.independence),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}
