//! Storage for posterior draws.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::{ColumnSchema, OutcomeMode, OutcomeScaler};
use crate::error::{Error, Result};
use crate::priors::CalibratedPriors;
use crate::trees::TreeSnapshot;

/// Dense `draws × d × n` array, row index fastest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawArray {
    pub draws: usize,
    pub d: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl DrawArray {
    pub fn new(d: usize, n: usize) -> Self {
        DrawArray {
            draws: 0,
            d,
            n,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(d: usize, n: usize, draws: usize) -> Self {
        DrawArray {
            draws: 0,
            d,
            n,
            data: Vec::with_capacity(draws * d * n),
        }
    }

    /// Append one draw given per-outcome vectors.
    pub fn push(&mut self, per_outcome: &[Vec<f64>]) {
        debug_assert_eq!(per_outcome.len(), self.d);
        for col in per_outcome {
            debug_assert_eq!(col.len(), self.n);
            self.data.extend_from_slice(col);
        }
        self.draws += 1;
    }

    #[inline]
    pub fn get(&self, s: usize, j: usize, i: usize) -> f64 {
        self.data[(s * self.d + j) * self.n + i]
    }

    pub fn draw_outcome(&self, s: usize, j: usize) -> &[f64] {
        let start = (s * self.d + j) * self.n;
        &self.data[start..start + self.n]
    }

    /// All draws for one row and outcome.
    pub fn row_draws(&self, j: usize, i: usize) -> Vec<f64> {
        (0..self.draws).map(|s| self.get(s, j, i)).collect()
    }

    /// Posterior mean per outcome and row.
    pub fn mean(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.d];
        for s in 0..self.draws {
            for (j, col) in out.iter_mut().enumerate() {
                for (i, v) in col.iter_mut().enumerate() {
                    *v += self.get(s, j, i);
                }
            }
        }
        let k = self.draws as f64;
        out.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v /= k));
        out
    }

    /// Apply `f` elementwise, keeping the layout.
    pub fn append(&mut self, other: &DrawArray) {
        assert_eq!((self.d, self.n), (other.d, other.n), "draw array shapes differ");
        self.data.extend_from_slice(&other.data);
        self.draws += other.draws;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DrawArray {
        DrawArray {
            draws: self.draws,
            d: self.d,
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Everything retained from one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub config: ModelConfig,
    pub outcome_names: Vec<String>,
    pub covariate_schema: Vec<ColumnSchema>,
    pub scaler: OutcomeScaler,
    pub priors: CalibratedPriors,
    /// Training-row fits: original units (continuous) or latent scale (probit).
    pub fitted: DrawArray,
    /// Fits on the extra covariate sets passed at fit time, same units as `fitted`.
    pub eval_fitted: Vec<DrawArray>,
    /// Retained Σ draws, row-major `d × d`, sampler units.
    pub sigma_draws: Vec<f64>,
    /// Σ after every iteration including burn-in.
    pub sigma_trace: Vec<f64>,
    /// Accepted tree moves per iteration and outcome (`n_mcmc × d`).
    pub tree_accepts: Vec<u32>,
    /// PX-MH acceptance per iteration; empty unless PX-MH ran.
    pub sigma_accepts: Vec<bool>,
    /// Internal-node counts per retained draw, outcome and covariate.
    pub split_counts: Vec<u32>,
    pub latent: Option<DrawArray>,
    /// Per retained draw, per outcome, the `m` trees.
    pub forests: Option<Vec<Vec<Vec<TreeSnapshot>>>>,
}

const MAGIC: &[u8; 8] = b"SUBART01";

impl PosteriorChain {
    pub fn mode(&self) -> OutcomeMode {
        self.config.mode
    }

    pub fn d(&self) -> usize {
        self.outcome_names.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_schema.len()
    }

    pub fn retained(&self) -> usize {
        self.fitted.draws
    }

    pub fn n_iterations(&self) -> usize {
        self.sigma_trace.len() / (self.d() * self.d())
    }

    fn matrix_at(buf: &[f64], s: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(d, d, &buf[s * d * d..(s + 1) * d * d])
    }

    /// Retained Σ draw `s` in sampler units.
    pub fn sigma(&self, s: usize) -> DMatrix<f64> {
        Self::matrix_at(&self.sigma_draws, s, self.d())
    }

    /// Retained Σ draw `s` in original outcome units.
    pub fn sigma_original(&self, s: usize) -> DMatrix<f64> {
        let d = self.d();
        let flat = &self.sigma_draws[s * d * d..(s + 1) * d * d];
        DMatrix::from_row_slice(d, d, &self.scaler.unscale_covariance(flat))
    }

    /// Error standard deviation of outcome `j` per retained draw, original units.
    pub fn sd_draws(&self, j: usize) -> Vec<f64> {
        let d = self.d();
        let r = self.scaler.range(j);
        (0..self.retained())
            .map(|s| self.sigma_draws[s * d * d + j * d + j].sqrt() * r)
            .collect()
    }

    /// Correlation between outcomes `j` and `k` per retained draw.
    pub fn correlation_draws(&self, j: usize, k: usize) -> Vec<f64> {
        let d = self.d();
        (0..self.retained())
            .map(|s| {
                let b = s * d * d;
                self.sigma_draws[b + j * d + k]
                    / (self.sigma_draws[b + j * d + j] * self.sigma_draws[b + k * d + k]).sqrt()
            })
            .collect()
    }

    /// Pool independent chains of the same model, draws in chain order.
    pub fn concat(chains: Vec<PosteriorChain>) -> Result<Self> {
        let mut it = chains.into_iter();
        let mut out = it.next().ok_or(Error::InsufficientDraws(0))?;
        for c in it {
            if c.outcome_names != out.outcome_names || c.covariate_schema != out.covariate_schema {
                return Err(Error::SchemaMismatch("chains were fitted on different data".into()));
            }
            out.fitted.append(&c.fitted);
            for (a, b) in out.eval_fitted.iter_mut().zip(&c.eval_fitted) {
                a.append(b);
            }
            out.sigma_draws.extend(c.sigma_draws);
            out.sigma_trace.extend(c.sigma_trace);
            out.tree_accepts.extend(c.tree_accepts);
            out.sigma_accepts.extend(c.sigma_accepts);
            out.split_counts.extend(c.split_counts);
            if let (Some(a), Some(b)) = (out.latent.as_mut(), c.latent.as_ref()) {
                a.append(b);
            }
            if let (Some(a), Some(b)) = (out.forests.as_mut(), c.forests) {
                a.extend(b);
            }
        }
        Ok(out)
    }

    pub fn split_counts_at(&self, s: usize, j: usize) -> &[u32] {
        let p = self.p();
        let start = (s * self.d() + j) * p;
        &self.split_counts[start..start + p]
    }

    /// Write to `path` atomically (temp file then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
            w.write_all(MAGIC)?;
            bincode::serialize_into(&mut w, self).map_err(|e| Error::ChainFormat(e.to_string()))?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ChainFormat("not a chain file".into()));
        }
        bincode::deserialize_from(r).map_err(|e| Error::ChainFormat(e.to_string()))
    }
}
