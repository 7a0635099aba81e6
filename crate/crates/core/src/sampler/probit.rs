use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{offsets, ChainState, Forest, SweepInfo};
use crate::config::ModelConfig;
use crate::data::Covariates;
use crate::distributions::{
    conditional_normal_params, sample_inverse_wishart, sample_truncated_normal, CholeskyFactor, Side,
};
use crate::error::{Error, Result};
use crate::priors::CalibratedPriors;
use crate::trees::TreeDesign;

/// Latent starting value: the median of a half-normal.
const Z_INIT: f64 = 0.6745;

/// Unnormalised inverse-Wishart log density; the terms dropped depend only on (df, d).
fn log_iw(x: &CholeskyFactor, x_inv: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> Result<f64> {
    let d = x.dim() as f64;
    let s_logdet = CholeskyFactor::new(scale)?.log_det();
    Ok(0.5 * df * s_logdet - 0.5 * (df + d + 1.0) * x.log_det() - 0.5 * (scale * x_inv).trace())
}

/// `log|Σ|` and `tr(Σ⁻¹ S)` for `Σ = D^{-1/2} W D^{-1/2}`, `D = diag(W)`.
fn correlation_terms(w: &CholeskyFactor, w_inv: &DMatrix<f64>, w_diag: &[f64], s_e: &DMatrix<f64>) -> (f64, f64) {
    let d = w_diag.len();
    let log_det_sigma = w.log_det() - w_diag.iter().map(|v| v.ln()).sum::<f64>();
    let mut tr = 0.0;
    for r in 0..d {
        for c in 0..d {
            // (Σ⁻¹)_rc = sqrt(D_r D_c) (W⁻¹)_rc
            tr += (w_diag[r] * w_diag[c]).sqrt() * w_inv[(r, c)] * s_e[(c, r)];
        }
    }
    (log_det_sigma, tr)
}

fn log_target(w: &DMatrix<f64>, s_e: &DMatrix<f64>, n: usize, nu: f64) -> Result<(f64, CholeskyFactor, DMatrix<f64>)> {
    let d = w.nrows();
    let chol = CholeskyFactor::new(w)?;
    let inv = chol.inverse();
    let diag: Vec<f64> = (0..d).map(|i| w[(i, i)]).collect();
    let prior = log_iw(&chol, &inv, nu + d as f64 - 1.0, &DMatrix::identity(d, d))?;
    let (ld, tr) = correlation_terms(&chol, &inv, &diag, s_e);
    Ok((prior - 0.5 * n as f64 * ld - 0.5 * tr, chol, inv))
}

/// Log acceptance ratio of moving the expanded matrix from `w` to `w_star`.
pub fn log_pxmh_ratio(
    w: &DMatrix<f64>,
    w_star: &DMatrix<f64>,
    s_e: &DMatrix<f64>,
    n: usize,
    nu: f64,
    nu_prop: f64,
) -> Result<f64> {
    let (t_cur, c_cur, i_cur) = log_target(w, s_e, n, nu)?;
    let (t_new, c_new, i_new) = log_target(w_star, s_e, n, nu)?;
    // q(W | W*) and q(W* | W) under Inv-Wishart(ν_prop, ν_prop · current)
    let q_back = log_iw(&c_cur, &i_cur, nu_prop, &(w_star * nu_prop))?;
    let q_fwd = log_iw(&c_new, &i_new, nu_prop, &(w * nu_prop))?;
    Ok(t_new - t_cur + q_back - q_fwd)
}

/// Rescale an expanded matrix to unit diagonal.
pub fn to_correlation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let d = w.nrows();
    let s: Vec<f64> = (0..d).map(|i| w[(i, i)].sqrt()).collect();
    DMatrix::from_fn(d, d, |r, c| if r == c { 1.0 } else { w[(r, c)] / (s[r] * s[c]) })
}

/// One PX-MH step. Returns the (possibly unchanged) expanded matrix and whether it moved.
pub fn update_sigma_probit_pxmh<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    s_e: &DMatrix<f64>,
    n: usize,
    nu: f64,
    nu_prop: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, bool)> {
    let proposal = sample_inverse_wishart(nu_prop, &(w * nu_prop), rng)?;
    let log_r = match log_pxmh_ratio(w, &proposal, s_e, n, nu, nu_prop) {
        Ok(v) => v,
        Err(Error::NotPositiveDefinite(_)) => return Ok((w.clone(), false)),
        Err(e) => return Err(e),
    };
    if crate::trees::mh_accept(log_r, rng) {
        Ok((proposal, true))
    } else {
        Ok((w.clone(), false))
    }
}

/// State of a binary-outcome chain with latent utilities `z`.
pub struct ProbitSampler {
    design: TreeDesign,
    y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub forests: Vec<Forest>,
    /// Correlation matrix.
    pub sigma: DMatrix<f64>,
    /// Expanded covariance `D^{1/2} Σ D^{1/2}`.
    pub w: DMatrix<f64>,
    leaf_var: f64,
    nu_prop: f64,
    config: ModelConfig,
}

impl ProbitSampler {
    pub fn new(
        x: &Covariates,
        y: Vec<Vec<f64>>,
        priors: &CalibratedPriors,
        config: &ModelConfig,
    ) -> Result<Self> {
        let d = y.len();
        let n = x.n_rows();
        let z = y
            .iter()
            .map(|col| col.iter().map(|&v| if v == 1.0 { Z_INIT } else { -Z_INIT }).collect())
            .collect();
        Ok(ProbitSampler {
            design: TreeDesign::new(x),
            forests: (0..d).map(|_| Forest::stumps(config.m, n)).collect(),
            y,
            z,
            sigma: DMatrix::identity(d, d),
            w: DMatrix::identity(d, d),
            leaf_var: priors.leaf_sd * priors.leaf_sd,
            nu_prop: config.resolved_nu_prop(n, d),
            config: config.clone(),
        })
    }

    fn latent_cross_product(&self) -> DMatrix<f64> {
        let d = self.z.len();
        let e: Vec<Vec<f64>> = (0..d)
            .map(|j| self.z[j].iter().zip(&self.forests[j].fitted).map(|(a, b)| a - b).collect())
            .collect();
        DMatrix::from_fn(d, d, |r, c| e[r].iter().zip(&e[c]).map(|(a, b)| a * b).sum())
    }

    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<SweepInfo> {
        let d = self.y.len();
        let mut accepts = Vec::with_capacity(d);
        for j in 0..d {
            let (weights, v) = if self.config.independence || d == 1 {
                (vec![0.0; d - 1], 1.0)
            } else {
                let p = conditional_normal_params(&self.sigma, j)?;
                (p.weights, p.v)
            };
            let u = offsets(j, &weights, &self.z, &self.forests);
            let acc = self.forests[j].backfit(
                &self.design,
                &self.z[j],
                &u,
                v,
                self.leaf_var,
                &self.config,
                rng,
            );
            accepts.push(acc);
            let sd = v.sqrt();
            for i in 0..self.design.n {
                let mean = self.forests[j].fitted[i] + u[i];
                let side = if self.y[j][i] == 1.0 { Side::Positive } else { Side::NonPositive };
                self.z[j][i] = sample_truncated_normal(mean, sd, side, rng)?;
            }
        }
        let px_accept = if d > 1 && !self.config.independence {
            let s_e = self.latent_cross_product();
            let (w, moved) =
                update_sigma_probit_pxmh(&self.w, &s_e, self.design.n, self.config.nu, self.nu_prop, rng)?;
            if moved {
                self.sigma = to_correlation(&w);
                self.w = w;
            }
            Some(moved)
        } else {
            None
        };
        Ok(SweepInfo { accepts, px_accept })
    }

    /// Replace the latents and set each outcome to the sign of its latent.
    pub fn set_latent(&mut self, z: Vec<Vec<f64>>) {
        self.y = z
            .iter()
            .map(|col| col.iter().map(|&v| f64::from(v > 0.0)).collect())
            .collect();
        self.z = z;
    }
}

impl ChainState for ProbitSampler {
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
        Some(&self.z)
    }
}
