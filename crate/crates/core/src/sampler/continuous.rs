use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{offsets, ChainState, Forest, SweepInfo};
use crate::config::ModelConfig;
use crate::data::Covariates;
use crate::distributions::{
    conditional_normal_params, sample_inverse_gamma, sample_inverse_wishart, CholeskyFactor,
};
use crate::error::{Error, Result};
use crate::priors::CalibratedPriors;
use crate::trees::TreeDesign;

/// Draw `a_j ~ Inv-Gamma((ν+d)/2, 1/A_j² + ν (Σ⁻¹)_jj)`.
pub fn update_a<R: Rng + ?Sized>(
    sigma_inv_jj: f64,
    a_scale: f64,
    nu: f64,
    d: usize,
    rng: &mut R,
) -> Result<f64> {
    sample_inverse_gamma(
        (nu + d as f64) / 2.0,
        1.0 / (a_scale * a_scale) + nu * sigma_inv_jj,
        rng,
    )
}

/// Draw `Σ ~ Inv-Wishart(ν + d - 1 + n, 2ν diag(1/a) + S)`.
pub fn update_sigma_continuous<R: Rng + ?Sized>(
    residual_cross_product: &DMatrix<f64>,
    a: &[f64],
    nu: f64,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = a.len();
    let mut scale = residual_cross_product.clone();
    for j in 0..d {
        scale[(j, j)] += 2.0 * nu / a[j];
    }
    sample_inverse_wishart(nu + d as f64 - 1.0 + n as f64, &scale, rng)
}

/// State of a continuous-outcome chain. Outcomes are on the scaled axis.
pub struct ContinuousSampler {
    design: TreeDesign,
    pub y: Vec<Vec<f64>>,
    pub forests: Vec<Forest>,
    pub sigma: DMatrix<f64>,
    pub a: Vec<f64>,
    half_t: Vec<f64>,
    leaf_var: f64,
    config: ModelConfig,
}

impl ContinuousSampler {
    /// Stumps at zero, Σ⁰ = diag(σ̂²), a⁰ = A².
    pub fn new(
        x: &Covariates,
        y: Vec<Vec<f64>>,
        priors: &CalibratedPriors,
        config: &ModelConfig,
    ) -> Result<Self> {
        let d = y.len();
        if priors.a.len() != d || priors.sigma_hat.len() != d {
            return Err(Error::DimensionMismatch("priors do not match outcome count".into()));
        }
        let n = x.n_rows();
        let sigma = DMatrix::from_fn(d, d, |r, c| {
            if r == c {
                priors.sigma_hat[r] * priors.sigma_hat[r]
            } else {
                0.0
            }
        });
        Ok(ContinuousSampler {
            design: TreeDesign::new(x),
            forests: (0..d).map(|_| Forest::stumps(config.m, n)).collect(),
            y,
            sigma,
            a: priors.a.iter().map(|a| a * a).collect(),
            half_t: priors.a.clone(),
            leaf_var: priors.leaf_sd * priors.leaf_sd,
            config: config.clone(),
        })
    }

    pub fn design(&self) -> &TreeDesign {
        &self.design
    }

    fn residual_cross_product(&self) -> DMatrix<f64> {
        let d = self.y.len();
        let n = self.design.n;
        let mut s = DMatrix::zeros(d, d);
        let e: Vec<Vec<f64>> = (0..d)
            .map(|j| (0..n).map(|i| self.y[j][i] - self.forests[j].fitted[i]).collect())
            .collect();
        for r in 0..d {
            for c in r..d {
                let v: f64 = e[r].iter().zip(&e[c]).map(|(a, b)| a * b).sum();
                s[(r, c)] = v;
                s[(c, r)] = v;
            }
        }
        s
    }

    /// Trees for every outcome, then a, then Σ.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<SweepInfo> {
        let d = self.y.len();
        let n = self.design.n;
        let mut accepts = Vec::with_capacity(d);
        for j in 0..d {
            let (weights, v) = if self.config.independence {
                (vec![0.0; d - 1], self.sigma[(j, j)])
            } else {
                let p = conditional_normal_params(&self.sigma, j)?;
                (p.weights, p.v)
            };
            let u = offsets(j, &weights, &self.y, &self.forests);
            let acc = self.forests[j].backfit(
                &self.design,
                &self.y[j],
                &u,
                v,
                self.leaf_var,
                &self.config,
                rng,
            );
            accepts.push(acc);
        }

        let nu = self.config.nu;
        let s = self.residual_cross_product();
        if self.config.independence {
            for j in 0..d {
                self.a[j] = update_a(1.0 / self.sigma[(j, j)], self.half_t[j], nu, 1, rng)?;
                self.sigma[(j, j)] =
                    sample_inverse_gamma((nu + n as f64) / 2.0, nu / self.a[j] + s[(j, j)] / 2.0, rng)?;
            }
        } else {
            let inv = CholeskyFactor::new(&self.sigma)?.inverse();
            for j in 0..d {
                self.a[j] = update_a(inv[(j, j)], self.half_t[j], nu, d, rng)?;
            }
            self.sigma = update_sigma_continuous(&s, &self.a, nu, n, rng)?;
        }
        Ok(SweepInfo {
            accepts,
            px_accept: None,
        })
    }

    /// Replace the outcome matrix (used by joint-distribution tests).
    pub fn set_outcomes(&mut self, y: Vec<Vec<f64>>) {
        self.y = y;
    }
}

impl ChainState for ContinuousSampler {
    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<SweepInfo> {
        self.step(rng)
    }

    fn forests(&self) -> &[Forest] {
        &self.forests
    }

    fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn latent(&self) -> Option<&[Vec<f64>]> {
        None
    }
}
