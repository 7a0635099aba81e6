//! Metropolis-within-Gibbs engines.

mod continuous;
mod probit;

pub use continuous::{update_a, update_sigma_continuous, ContinuousSampler};
pub use probit::{log_pxmh_ratio, update_sigma_probit_pxmh, ProbitSampler};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{DrawArray, PosteriorChain};
use crate::config::ModelConfig;
use crate::data::{
    fit_scaler, validate_dataset, Covariate, Covariates, Dataset, OutcomeMode, OutcomeScaler,
};
use crate::distributions::std_normal_cdf;
use crate::error::{Error, Result};
use crate::priors::{calibrate_priors, CalibratedPriors};
use crate::trees::{
    draw_leaf_parameters, update_tree, DecisionTree, MoveContext, MoveProbabilities, TreeDesign,
};

/// The `m` trees of one outcome plus their summed fit on the training rows.
#[derive(Clone, Debug)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub fitted: Vec<f64>,
}

impl Forest {
    pub fn stumps(m: usize, n: usize) -> Self {
        Forest {
            trees: (0..m).map(|_| DecisionTree::stump(n, 0.0)).collect(),
            fitted: vec![0.0; n],
        }
    }

    /// Recompute the cached fit from the leaf caches.
    pub fn recompute_fitted(&mut self) {
        self.fitted.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.trees {
            for leaf in t.leaves() {
                let mu = t.leaf_mu(leaf);
                for &r in t.leaf_rows(leaf) {
                    self.fitted[r as usize] += mu;
                }
            }
        }
    }

    pub fn evaluate_row(&self, x: &Covariates, row: usize) -> f64 {
        self.trees.iter().map(|t| t.evaluate_covariates(x, row)).sum()
    }

    pub fn evaluate(&self, x: &Covariates) -> Vec<f64> {
        let mut out = vec![0.0; x.n_rows()];
        for t in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += t.evaluate_covariates(x, i);
            }
        }
        out
    }

    /// One back-fitting pass against `target - offsets`; returns accepted moves.
    #[allow(clippy::too_many_arguments)]
    pub fn backfit<R: Rng + ?Sized>(
        &mut self,
        design: &TreeDesign,
        target: &[f64],
        offsets: &[f64],
        v: f64,
        leaf_var: f64,
        config: &ModelConfig,
        rng: &mut R,
    ) -> u32 {
        let mut resid: Vec<f64> = (0..target.len())
            .map(|i| target[i] - offsets[i] - self.fitted[i])
            .collect();
        let mut accepted = 0;
        for tree in &mut self.trees {
            shift_leaves(tree, &mut resid, 1.0);
            let ctx = MoveContext {
                design,
                resid: &resid,
                v,
                leaf_var,
                alpha: config.alpha,
                beta: config.beta,
                probs: MoveProbabilities::default(),
            };
            if update_tree(tree, &ctx, rng).1 {
                accepted += 1;
            }
            draw_leaf_parameters(tree, &resid, v, leaf_var, rng);
            shift_leaves(tree, &mut resid, -1.0);
        }
        self.recompute_fitted();
        accepted
    }

    pub fn split_counts(&self, p: usize) -> Vec<u32> {
        let mut c = vec![0u32; p];
        for t in &self.trees {
            t.add_split_counts(&mut c);
        }
        c
    }
}

/// `resid += sign · μ_leaf` on every row of every leaf.
fn shift_leaves(tree: &DecisionTree, resid: &mut [f64], sign: f64) {
    for leaf in tree.leaves() {
        let mu = sign * tree.leaf_mu(leaf);
        for &r in tree.leaf_rows(leaf) {
            resid[r as usize] += mu;
        }
    }
}

/// `y - Σ_{k≠t} g_k`, computed by direct tree evaluation.
pub fn partial_residuals(y: &[f64], forest: &Forest, excluded: usize, design: &TreeDesign) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let row = design.row(i);
            let others: f64 = forest
                .trees
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != excluded)
                .map(|(_, t)| t.evaluate(&row))
                .sum();
            y[i] - others
        })
        .collect()
}

/// `u_i = Σ_k w_k (target_ki - fit_ki)` over the outcomes other than `j`.
pub(crate) fn offsets(j: usize, weights: &[f64], target: &[Vec<f64>], forests: &[Forest]) -> Vec<f64> {
    let n = target[j].len();
    let mut u = vec![0.0; n];
    let others = (0..target.len()).filter(|&k| k != j);
    for (w, k) in weights.iter().zip(others) {
        if *w == 0.0 {
            continue;
        }
        for i in 0..n {
            u[i] += w * (target[k][i] - forests[k].fitted[i]);
        }
    }
    u
}

/// What one sweep reports back.
#[derive(Clone, Debug, Default)]
pub struct SweepInfo {
    pub accepts: Vec<u32>,
    pub px_accept: Option<bool>,
}

/// Shared view of a running sampler for chain recording.
pub trait ChainState {
    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<SweepInfo>;
    fn forests(&self) -> &[Forest];
    fn sigma(&self) -> &DMatrix<f64>;
    fn latent(&self) -> Option<&[Vec<f64>]>;
}

/// Extra artifacts to collect while sampling.
#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Covariate sets evaluated under every retained draw.
    pub eval_sets: Vec<Covariates>,
    pub keep_forests: bool,
    pub keep_latent: bool,
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

struct Recorder<'a> {
    config: &'a ModelConfig,
    options: &'a FitOptions,
    scaler: &'a OutcomeScaler,
    p: usize,
    fitted: DrawArray,
    eval_fitted: Vec<DrawArray>,
    sigma_draws: Vec<f64>,
    sigma_trace: Vec<f64>,
    tree_accepts: Vec<u32>,
    sigma_accepts: Vec<bool>,
    split_counts: Vec<u32>,
    latent: Option<DrawArray>,
    forests: Option<Vec<Vec<Vec<crate::trees::TreeSnapshot>>>>,
}

impl<'a> Recorder<'a> {
    fn new(config: &'a ModelConfig, options: &'a FitOptions, scaler: &'a OutcomeScaler, d: usize, n: usize, p: usize) -> Self {
        let keep = config.retained();
        Recorder {
            config,
            options,
            scaler,
            p,
            fitted: DrawArray::with_capacity(d, n, keep),
            eval_fitted: options
                .eval_sets
                .iter()
                .map(|x| DrawArray::with_capacity(d, x.n_rows(), keep))
                .collect(),
            sigma_draws: Vec::with_capacity(keep * d * d),
            sigma_trace: Vec::with_capacity(config.n_mcmc * d * d),
            tree_accepts: Vec::with_capacity(config.n_mcmc * d),
            sigma_accepts: Vec::new(),
            split_counts: Vec::with_capacity(keep * d * p),
            latent: options.keep_latent.then(|| DrawArray::new(d, n)),
            forests: options.keep_forests.then(Vec::new),
        }
    }

    fn to_output(&self, j: usize, v: &[f64]) -> Vec<f64> {
        match self.config.mode {
            OutcomeMode::Continuous => self.scaler.inverse_column(j, v),
            OutcomeMode::Probit => v.to_vec(),
        }
    }

    fn record<S: ChainState>(&mut self, it: usize, state: &S, info: &SweepInfo) {
        self.sigma_trace.extend(flatten(state.sigma()));
        self.tree_accepts.extend(&info.accepts);
        if let Some(a) = info.px_accept {
            self.sigma_accepts.push(a);
        }
        if it < self.config.n_burnin {
            return;
        }
        let forests = state.forests();
        let fits: Vec<Vec<f64>> = forests
            .iter()
            .enumerate()
            .map(|(j, f)| self.to_output(j, &f.fitted))
            .collect();
        self.fitted.push(&fits);
        for (x, store) in self.options.eval_sets.iter().zip(&mut self.eval_fitted) {
            let vals: Vec<Vec<f64>> = forests
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    let raw = f.evaluate(x);
                    match self.config.mode {
                        OutcomeMode::Continuous => self.scaler.inverse_column(j, &raw),
                        OutcomeMode::Probit => raw,
                    }
                })
                .collect();
            store.push(&vals);
        }
        self.sigma_draws.extend(flatten(state.sigma()));
        for f in forests {
            self.split_counts.extend(f.split_counts(self.p));
        }
        if let (Some(store), Some(z)) = (&mut self.latent, state.latent()) {
            store.push(z);
        }
        if let Some(store) = &mut self.forests {
            store.push(
                forests
                    .iter()
                    .map(|f| f.trees.iter().map(DecisionTree::snapshot).collect())
                    .collect(),
            );
        }
    }
}

fn run<S: ChainState>(
    mut state: S,
    dataset: &Dataset,
    config: &ModelConfig,
    options: &FitOptions,
    scaler: OutcomeScaler,
    priors: CalibratedPriors,
    rng: &mut ChaCha8Rng,
) -> Result<PosteriorChain> {
    let (n, d, p) = (dataset.n_rows(), dataset.n_outcomes(), dataset.n_covariates());
    let mut rec = Recorder::new(config, options, &scaler, d, n, p);
    for it in 0..config.n_mcmc {
        let info = state.sweep(rng)?;
        rec.record(it, &state, &info);
    }
    let Recorder {
        fitted,
        eval_fitted,
        sigma_draws,
        sigma_trace,
        tree_accepts,
        sigma_accepts,
        split_counts,
        latent,
        forests,
        ..
    } = rec;
    Ok(PosteriorChain {
        config: config.clone(),
        outcome_names: dataset.outcome_names.clone(),
        covariate_schema: dataset.covariates.schema(),
        scaler,
        priors,
        fitted,
        eval_fitted,
        sigma_draws,
        sigma_trace,
        tree_accepts,
        sigma_accepts,
        split_counts,
        latent,
        forests,
    })
}

/// Validate, scale, calibrate and run one chain.
pub fn fit(dataset: &Dataset, config: &ModelConfig, options: &FitOptions) -> Result<PosteriorChain> {
    let ds = validate_dataset(dataset.clone(), config.mode)?;
    config.validate_for(ds.n_rows(), ds.n_outcomes())?;
    let schema = ds.covariates.schema();
    for x in &options.eval_sets {
        x.check_schema(&schema)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match config.mode {
        OutcomeMode::Continuous => {
            let scaler = fit_scaler(&ds.outcomes, &ds.outcome_names)?;
            let y: Vec<Vec<f64>> = ds
                .outcomes
                .iter()
                .enumerate()
                .map(|(j, c)| scaler.forward_column(j, c))
                .collect();
            let priors = calibrate_priors(&ds.covariates, &y, config)?;
            let state = ContinuousSampler::new(&ds.covariates, y, &priors, config)?;
            run(state, &ds, config, options, scaler, priors, &mut rng)
        }
        OutcomeMode::Probit => {
            let priors = calibrate_priors(&ds.covariates, &ds.outcomes, config)?;
            let state = ProbitSampler::new(&ds.covariates, ds.outcomes.clone(), &priors, config)?;
            let scaler = OutcomeScaler::identity(ds.n_outcomes());
            run(state, &ds, config, options, scaler, priors, &mut rng)
        }
    }
}

/// Run `chains` independent chains in parallel and pool their retained draws.
/// Chain 0 uses `config.seed`; the others use seeds derived from it.
pub fn fit_chains(
    dataset: &Dataset,
    config: &ModelConfig,
    options: &FitOptions,
    chains: usize,
) -> Result<PosteriorChain> {
    use rayon::prelude::*;
    if chains == 0 {
        return Err(Error::InvalidConfig("at least one chain is required".into()));
    }
    let runs = (0..chains)
        .into_par_iter()
        .map(|c| {
            let seed = if c == 0 {
                config.seed
            } else {
                crate::simgen::replicate_seed(config.seed, c as u64)
            };
            fit(dataset, &config.clone().with_seed(seed), options)
        })
        .collect::<Result<Vec<_>>>()?;
    PosteriorChain::concat(runs)
}

/// Posterior mean of Φ(latent fit) per training row of a univariate probit fit of `t` on `x`.
pub fn fit_propensity(x: &Covariates, t: &[f64], config: &ModelConfig) -> Result<Vec<f64>> {
    if t.iter().all(|&v| v == t[0]) {
        return Err(Error::AllOneTreatment);
    }
    let mut cfg = config.clone();
    cfg.mode = OutcomeMode::Probit;
    let ds = Dataset {
        covariates: x.clone(),
        outcome_names: vec!["treatment".into()],
        outcomes: vec![t.to_vec()],
        treatment: None,
    };
    let chain = fit(&ds, &cfg, &FitOptions::default())?;
    let s = chain.retained() as f64;
    let mut ps = vec![0.0; x.n_rows()];
    for k in 0..chain.retained() {
        for (i, p) in ps.iter_mut().enumerate() {
            *p += std_normal_cdf(chain.fitted.get(k, 0, i));
        }
    }
    ps.iter_mut().for_each(|p| *p /= s);
    Ok(ps)
}

/// Append a propensity-score column named `ps`.
pub fn with_propensity_column(x: &Covariates, ps: Vec<f64>) -> Result<Covariates> {
    x.with_column(Covariate::continuous("ps", ps))
}
