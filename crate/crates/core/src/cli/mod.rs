//! Command-line front end: argument definitions and dispatch.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use output::{
    csv_bytes, exit_code, fmt_f64, sha256_file, write_atomic, ErrorReport, InputDigest, Run, RunManifest,
    ERROR_FILE, MANIFEST_FILE,
};

use crate::config::ConfigOverrides;
use crate::data::OutcomeMode;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "subart", version, about = "Multivariate Bayesian additive regression trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and save the chain.
    Fit(FitArgs),
    /// Posterior means and predictive intervals for new rows.
    Predict(PredictArgs),
    /// Cost-effectiveness analysis of a two-arm comparison.
    Cea(CeaArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Report the calibrated priors without sampling.
    Calibrate(CalibrateArgs),
    /// Trace and acceptance summaries of a saved chain.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Continuous,
    Probit,
}

impl From<ModeArg> for OutcomeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => OutcomeMode::Continuous,
            ModeArg::Probit => OutcomeMode::Probit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Friedman1,
    Friedman2,
    TtcmLike,
}

/// Model settings. Flags win over the JSON file, which wins over built-in defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct ModelFlags {
    /// JSON file of model settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Trees per outcome.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Tree prior base.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Tree prior depth penalty.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub alpha_sigma: Option<f64>,
    #[arg(long)]
    pub q_z: Option<f64>,
    #[arg(long)]
    pub n_mcmc: Option<usize>,
    #[arg(long)]
    pub n_burnin: Option<usize>,
    #[arg(long)]
    pub nu_prop: Option<f64>,
    /// Diagonal error covariance (one independent model per outcome).
    #[arg(long)]
    pub independence: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelFlags {
    fn flag_overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            m: self.m,
            kappa: self.kappa,
            alpha: self.alpha,
            beta: self.beta,
            nu: self.nu,
            alpha_sigma: self.alpha_sigma,
            q_z: self.q_z,
            n_mcmc: self.n_mcmc,
            n_burnin: self.n_burnin,
            nu_prop: self.nu_prop,
            mode: self.mode.map(Into::into),
            independence: self.independence.then_some(true),
            seed: self.seed,
        }
    }

    /// Flags over the JSON file.
    pub fn overrides(&self) -> Result<ConfigOverrides> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str::<ConfigOverrides>(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => ConfigOverrides::default(),
        };
        Ok(self.flag_overrides().over(file))
    }
}

/// Input table and column roles.
#[derive(Clone, Debug, Args)]
pub struct DataFlags {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub outcomes: Vec<String>,
    /// Covariates to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// Columns to drop.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Independent chains pooled after burn-in.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Do not store trees (the chain then cannot predict new rows).
    #[arg(long)]
    pub no_trees: bool,
    /// Also write the trees of the last retained draw as JSON.
    #[arg(long)]
    pub export_trees: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Predictive interval level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct CeaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub cost_col: String,
    #[arg(long)]
    pub effect_col: String,
    /// 0/1 treatment indicator.
    #[arg(long, default_value = "t")]
    pub treatment_col: String,
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Willingness-to-pay values reported in the summary.
    #[arg(long, num_args = 1.., default_values_t = [20000.0, 50000.0])]
    pub lambda: Vec<f64>,
    /// Add estimated propensity scores to the outcome design.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub ps: Toggle,
    /// Credible interval level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// `--seed` is the base seed for both data and chains.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Training rows per replicate.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Test rows per replicate (Friedman scenarios).
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Cost-effect error correlation (cost-effectiveness scenario).
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub rho: f64,
    /// Noise multiplier (continuous Friedman scenario).
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// ps-subart, subart, ind-bart.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long, num_args = 1.., default_values_t = [20000.0, 50000.0])]
    pub lambda: Vec<f64>,
    /// Skip writing the generated datasets.
    #[arg(long)]
    pub no_datasets: bool,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Execute a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, out) = match &cli.command {
        Command::Fit(a) => ("fit", &a.out),
        Command::Predict(a) => ("predict", &a.out),
        Command::Cea(a) => ("cea", &a.out),
        Command::Simulate(a) => ("simulate", &a.out),
        Command::Calibrate(a) => ("calibrate", &a.out),
        Command::Diagnose(a) => ("diagnose", &a.out),
    };
    let mut run = match Run::start(name, out) {
        Ok(r) => r,
        Err(e) => {
            let report = ErrorReport::from_error(&e);
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
            return report.exit_code;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(&mut run, a),
        Command::Predict(a) => commands::predict(&mut run, a),
        Command::Cea(a) => commands::cea(&mut run, a),
        Command::Simulate(a) => commands::simulate(&mut run, a),
        Command::Calibrate(a) => commands::calibrate(&mut run, a),
        Command::Diagnose(a) => commands::diagnose(&mut run, a),
    };
    run.finish(result)
}
