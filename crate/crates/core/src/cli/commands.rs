use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::output::{csv_bytes, fmt_f64, Run};
use super::{CalibrateArgs, CeaArgs, DataFlags, DiagnoseArgs, FitArgs, ModelFlags, PredictArgs, ScenarioArg, SimulateArgs, Toggle};
use crate::analysis::{self, diagnostics, trace_rows};
use crate::cea::{cea_fit, ceac, default_lambda_grid, mate, summarize_cea, variable_importance};
use crate::chain::PosteriorChain;
use crate::config::{ConfigOverrides, ModelConfig};
use crate::data::{
    covariates_from_table, dataset_from_table, fit_scaler, validate_dataset, ColumnKind, ColumnRoles, Covariates,
    Dataset, OutcomeMode, RawTable,
};
use crate::error::{Error, Result};
use crate::priors::calibrate_priors;
use crate::sampler::{fit_chains, FitOptions};
use crate::simgen::{
    aggregate, cea_replicate, friedman1_split, friedman2_split, friedman_continuous_replicate,
    friedman_probit_replicate, replicate_seed, run_replicates, ttcm_covariates, ttcm_sample, CeaVariant,
    EstimateRecord,
};

const CHAIN_FILE: &str = "chain.bin";

fn read_table(run: &mut Run, path: &Path) -> Result<RawTable> {
    run.input(path)?;
    RawTable::read_csv(path)
}

fn load_chain(run: &mut Run, path: &Path) -> Result<PosteriorChain> {
    run.input(path)?;
    PosteriorChain::load(path)
}

/// Mode from the settings, else probit when every outcome is 0/1.
fn infer_mode(ov: &ConfigOverrides, ds: &Dataset) -> OutcomeMode {
    ov.mode.unwrap_or_else(|| {
        let binary = ds.outcomes.iter().flatten().all(|&v| v == 0.0 || v == 1.0);
        if binary {
            OutcomeMode::Probit
        } else {
            OutcomeMode::Continuous
        }
    })
}

fn read_dataset(run: &mut Run, data: &DataFlags, model: &ModelFlags) -> Result<(Dataset, ModelConfig)> {
    let table = read_table(run, &data.data)?;
    let overrides = model.overrides()?;
    let roles = ColumnRoles {
        outcomes: data.outcomes.clone(),
        categorical: data.categorical.clone(),
        treatment: None,
        ignore: data.ignore.clone(),
    };
    let raw = dataset_from_table(&table, &roles)?;
    let mode = infer_mode(&overrides, &raw);
    let config = overrides.resolve(mode);
    run.set_config(&config);
    config.validate()?;
    let ds = validate_dataset(raw, mode)?;
    config.validate_for(ds.n_rows(), ds.n_outcomes())?;
    Ok((ds, config))
}

#[derive(Serialize)]
struct OutcomeCalibration {
    name: String,
    /// Sampler scale.
    sigma_hat: Option<f64>,
    sigma_hat_original: Option<f64>,
    a: Option<f64>,
}

#[derive(Serialize)]
struct CalibrationReport {
    mode: OutcomeMode,
    outcomes: Vec<OutcomeCalibration>,
    leaf_sd: f64,
    nu: f64,
    alpha_sigma: f64,
    kappa: f64,
    q_z: f64,
}

fn trees_json(chain: &PosteriorChain) -> Option<serde_json::Value> {
    let forests = chain.forests.as_ref()?;
    let last = forests.last()?;
    Some(json!({
        "draw": forests.len() - 1,
        "covariates": chain.covariate_schema.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "outcomes": chain.outcome_names.iter().zip(last).map(|(name, trees)| json!({
            "name": name,
            "trees": trees,
        })).collect::<Vec<_>>(),
    }))
}

pub fn fit(run: &mut Run, args: &FitArgs) -> Result<()> {
    let (ds, config) = read_dataset(run, &args.data, &args.model)?;
    let options = FitOptions {
        keep_forests: !args.no_trees,
        ..FitOptions::default()
    };
    let chain = fit_chains(&ds, &config, &options, args.chains)?;
    chain.save(&run.path(CHAIN_FILE))?;
    run.artifact(CHAIN_FILE);
    run.write_json(
        "calibration.json",
        &calibration_from(&ds, &chain.priors, |j| chain.scaler.range(j), chain.mode()),
    )?;
    run.write_json("diagnostics.json", &diagnostics(&chain))?;
    if args.export_trees {
        let trees = trees_json(&chain).ok_or_else(|| Error::InvalidConfig("--export-trees needs stored trees".into()))?;
        run.write_json("trees.json", &trees)?;
    }
    Ok(())
}

pub fn predict(run: &mut Run, args: &PredictArgs) -> Result<()> {
    let chain = load_chain(run, &args.chain)?;
    run.set_config(&chain.config);
    let table = read_table(run, &args.data)?;
    let x = covariates_from_table(&table, &chain.covariate_schema)?;
    let s = analysis::predict(&chain, &x, args.level)?;
    let mut rows = Vec::with_capacity(x.n_rows() * chain.d());
    for i in 0..x.n_rows() {
        for (j, name) in chain.outcome_names.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                name.clone(),
                fmt_f64(s.mean[j][i]),
                fmt_f64(s.lower[j][i]),
                fmt_f64(s.upper[j][i]),
            ]);
        }
    }
    run.write("predictions.csv", &csv_bytes(&["row", "outcome", "mean", "lo", "hi"], rows)?)
}

pub fn cea(run: &mut Run, args: &CeaArgs) -> Result<()> {
    if args.cost_col == args.effect_col {
        return Err(Error::InvalidConfig("cost and effect columns must differ".into()));
    }
    let table = read_table(run, &args.data)?;
    let mut overrides = args.model.overrides()?;
    if overrides.mode == Some(OutcomeMode::Probit) {
        return Err(Error::InvalidConfig("cost-effectiveness analysis needs continuous outcomes".into()));
    }
    overrides.mode = Some(OutcomeMode::Continuous);
    let config = overrides.resolve(OutcomeMode::Continuous);
    run.set_config(&config);
    config.validate()?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::InvalidParameter(format!("level {} outside (0, 1)", args.level)));
    }
    let roles = ColumnRoles {
        outcomes: vec![args.cost_col.clone(), args.effect_col.clone()],
        categorical: args.categorical.clone(),
        treatment: Some(args.treatment_col.clone()),
        ignore: args.ignore.clone(),
    };
    let ds = dataset_from_table(&table, &roles)?;
    let use_ps = args.ps == Toggle::On;
    let f = cea_fit(&ds, &config, use_ps)?;
    let variant = if config.independence {
        CeaVariant::IndBart
    } else if use_ps {
        CeaVariant::PsSubart
    } else {
        CeaVariant::Subart
    };
    let draws = mate(&f);

    let mut grid = default_lambda_grid();
    grid.extend(args.lambda.iter().copied());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let probs = ceac(&draws, &grid);
    let rows = grid.iter().zip(&probs).map(|(l, p)| vec![fmt_f64(*l), fmt_f64(*p)]);
    run.write("ceac.csv", &csv_bytes(&["lambda", variant.name()], rows)?)?;

    let rows = draws
        .delta_c
        .iter()
        .zip(&draws.delta_q)
        .enumerate()
        .map(|(s, (c, q))| vec![s.to_string(), fmt_f64(*c), fmt_f64(*q)]);
    run.write("cep_draws.csv", &csv_bytes(&["draw", "delta_c", "delta_q"], rows)?)?;

    let summary = summarize_cea(&draws, &args.lambda, args.level);
    let design: Vec<String> = f.design.columns.iter().map(|c| c.name.clone()).collect();
    run.write_json(
        "summary.json",
        &json!({
            "variant": variant.name(),
            "cost": args.cost_col,
            "effect": args.effect_col,
            "propensity": use_ps,
            "design_columns": design,
            "summary": summary,
        }),
    )?;

    let imp = variable_importance(&f.chain);
    let mut rows = Vec::new();
    for (j, name) in f.chain.outcome_names.iter().enumerate() {
        for (k, col) in design.iter().enumerate() {
            rows.push(vec![name.clone(), col.clone(), fmt_f64(imp[j][k])]);
        }
    }
    run.write("importance.csv", &csv_bytes(&["outcome", "covariate", "importance"], rows)?)?;
    f.chain.save(&run.path(CHAIN_FILE))?;
    run.artifact(CHAIN_FILE);
    Ok(())
}

pub fn calibrate(run: &mut Run, args: &CalibrateArgs) -> Result<()> {
    let (ds, config) = read_dataset(run, &args.data, &args.model)?;
    let report = match config.mode {
        OutcomeMode::Continuous => {
            let scaler = fit_scaler(&ds.outcomes, &ds.outcome_names)?;
            let y: Vec<Vec<f64>> = (0..ds.n_outcomes()).map(|j| scaler.forward_column(j, &ds.outcomes[j])).collect();
            let p = calibrate_priors(&ds.covariates, &y, &config)?;
            calibration_from(&ds, &p, |j| scaler.range(j), config.mode)
        }
        OutcomeMode::Probit => {
            let p = calibrate_priors(&ds.covariates, &ds.outcomes, &config)?;
            calibration_from(&ds, &p, |_| 1.0, config.mode)
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    run.write_json("calibration.json", &report)
}

fn calibration_from(
    ds: &Dataset,
    p: &crate::priors::CalibratedPriors,
    range: impl Fn(usize) -> f64,
    mode: OutcomeMode,
) -> CalibrationReport {
    CalibrationReport {
        mode,
        outcomes: ds
            .outcome_names
            .iter()
            .enumerate()
            .map(|(j, name)| OutcomeCalibration {
                name: name.clone(),
                sigma_hat: p.sigma_hat.get(j).copied(),
                sigma_hat_original: p.sigma_hat.get(j).map(|s| s * range(j)),
                a: p.a.get(j).copied(),
            })
            .collect(),
        leaf_sd: p.leaf_sd,
        nu: p.nu,
        alpha_sigma: p.alpha_sigma,
        kappa: p.kappa,
        q_z: p.q_z,
    }
}

pub fn diagnose(run: &mut Run, args: &DiagnoseArgs) -> Result<()> {
    let chain = load_chain(run, &args.chain)?;
    run.set_config(&chain.config);
    let rows = trace_rows(&chain)
        .into_iter()
        .map(|r| vec![r.iteration.to_string(), r.parameter, fmt_f64(r.value)]);
    run.write("trace.csv", &csv_bytes(&["iteration", "parameter", "value"], rows)?)?;
    let diag = diagnostics(&chain);
    println!("{}", serde_json::to_string_pretty(&diag)?);
    run.write_json("diagnostics.json", &diag)
}

/// Dataset as CSV: covariates (categorical as labels), outcomes, then the treatment as `t`.
fn dataset_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let x = &ds.covariates;
    let mut header: Vec<&str> = x.columns.iter().map(|c| c.name.as_str()).collect();
    header.extend(ds.outcome_names.iter().map(String::as_str));
    if ds.treatment.is_some() {
        header.push("t");
    }
    let rows = (0..ds.n_rows()).map(|i| {
        let mut r: Vec<String> = x
            .columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Continuous => fmt_f64(c.values[i]),
                ColumnKind::Categorical { levels } => levels[c.values[i] as usize].clone(),
            })
            .collect();
        r.extend(ds.outcomes.iter().map(|col| fmt_f64(col[i])));
        if let Some(t) = &ds.treatment {
            r.push(fmt_f64(t[i]));
        }
        r
    });
    csv_bytes(&header, rows)
}

/// One metrics line.
struct Metric {
    replicate: usize,
    variant: String,
    metric: String,
    value: f64,
}

fn metric(replicate: usize, variant: CeaVariant, metric: String, value: f64) -> Metric {
    Metric {
        replicate,
        variant: variant.name().into(),
        metric,
        value,
    }
}

fn record(replicate: usize, v: CeaVariant, estimand: String, estimate: f64, truth: f64, ci: (f64, f64)) -> EstimateRecord {
    EstimateRecord {
        replicate,
        variant: v.name().into(),
        estimand,
        estimate,
        truth,
        lower: ci.0,
        upper: ci.1,
    }
}

fn pair_names(d: usize) -> Vec<String> {
    let mut v = Vec::new();
    for j in 1..=d {
        for k in j + 1..=d {
            v.push(format!("rho_{j}{k}"));
        }
    }
    v
}

type ReplicateOutput = (Vec<Metric>, Vec<EstimateRecord>);

fn friedman1_replicate(
    variants: &[CeaVariant],
    args: &SimulateArgs,
    config: &ModelConfig,
    r: usize,
    seed: u64,
) -> Result<ReplicateOutput> {
    let (mut metrics, mut records) = (Vec::new(), Vec::new());
    for &v in variants {
        let mut cfg = config.clone();
        cfg.independence = v == CeaVariant::IndBart;
        let m = friedman_continuous_replicate(args.d, args.n, args.n_test, args.noise_scale, &cfg, seed)?;
        for j in 0..args.d {
            let y = j + 1;
            metrics.push(metric(r, v, format!("rmse_y{y}"), m.rmse[j]));
            metrics.push(metric(r, v, format!("rmse_truth_y{y}"), m.rmse_truth[j]));
            metrics.push(metric(r, v, format!("crps_y{y}"), m.crps[j]));
            metrics.push(metric(r, v, format!("coverage_y{y}"), m.coverage[j]));
            records.push(record(r, v, format!("sigma_{y}"), m.sigma_mean[j], m.sigma_true[j], m.sigma_ci[j]));
        }
        for (k, name) in pair_names(args.d).into_iter().enumerate() {
            records.push(record(r, v, name, m.rho_mean[k], m.rho_true[k], m.rho_ci[k]));
        }
    }
    Ok((metrics, records))
}

fn friedman2_replicate(
    variants: &[CeaVariant],
    args: &SimulateArgs,
    config: &ModelConfig,
    r: usize,
    seed: u64,
) -> Result<ReplicateOutput> {
    let (mut metrics, mut records) = (Vec::new(), Vec::new());
    for &v in variants {
        let mut cfg = config.clone();
        cfg.independence = v == CeaVariant::IndBart;
        let m = friedman_probit_replicate(args.d, args.n, args.n_test, &cfg, seed)?;
        for j in 0..args.d {
            let y = j + 1;
            metrics.push(metric(r, v, format!("log_loss_y{y}"), m.log_loss[j]));
            metrics.push(metric(r, v, format!("baseline_log_loss_y{y}"), m.baseline_log_loss[j]));
            metrics.push(metric(r, v, format!("accuracy_y{y}"), m.accuracy[j]));
            metrics.push(metric(r, v, format!("ci_coverage_y{y}"), m.ci_coverage[j]));
        }
        if let Some(a) = m.px_acceptance {
            metrics.push(metric(r, v, "px_acceptance".into(), a));
        }
        for (k, name) in pair_names(args.d).into_iter().enumerate() {
            records.push(record(r, v, name, m.rho_mean[k], m.rho_true[k], m.rho_ci[k]));
        }
    }
    Ok((metrics, records))
}

pub fn simulate(run: &mut Run, args: &SimulateArgs) -> Result<()> {
    let (mode, default_variants) = match args.scenario {
        ScenarioArg::Friedman1 => (OutcomeMode::Continuous, vec![CeaVariant::Subart]),
        ScenarioArg::Friedman2 => (OutcomeMode::Probit, vec![CeaVariant::Subart]),
        ScenarioArg::TtcmLike => (
            OutcomeMode::Continuous,
            vec![CeaVariant::PsSubart, CeaVariant::Subart, CeaVariant::IndBart],
        ),
    };
    let mut overrides = args.model.overrides()?;
    overrides.mode = Some(mode);
    let config = overrides.resolve(mode);
    run.set_config(&config);
    config.validate()?;
    let variants = if args.variants.is_empty() {
        default_variants
    } else {
        args.variants.iter().map(|s| CeaVariant::parse(s)).collect::<Result<Vec<_>>>()?
    };
    if args.scenario != ScenarioArg::TtcmLike && variants.contains(&CeaVariant::PsSubart) {
        return Err(Error::InvalidParameter("ps-subart applies to the cost-effectiveness scenario only".into()));
    }
    if args.replicates == 0 {
        return Err(Error::InvalidParameter("at least one replicate is required".into()));
    }
    let base = config.seed;
    let fixed_x: Option<Covariates> = (args.scenario == ScenarioArg::TtcmLike).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        ttcm_covariates(args.n, &mut rng)
    });

    if !args.no_datasets {
        for r in 0..args.replicates {
            let seed = replicate_seed(base, r as u64);
            match args.scenario {
                ScenarioArg::Friedman1 => {
                    let (train, test) = friedman1_split(args.d, args.n, args.n_test, args.noise_scale, seed)?;
                    run.write(&format!("datasets/rep{r:04}_train.csv"), &dataset_csv(&train.dataset)?)?;
                    run.write(&format!("datasets/rep{r:04}_test.csv"), &dataset_csv(&test.dataset)?)?;
                }
                ScenarioArg::Friedman2 => {
                    let (train, test) = friedman2_split(args.d, args.n, args.n_test, seed)?;
                    run.write(&format!("datasets/rep{r:04}_train.csv"), &dataset_csv(&train.dataset)?)?;
                    run.write(&format!("datasets/rep{r:04}_test.csv"), &dataset_csv(&test.dataset)?)?;
                }
                ScenarioArg::TtcmLike => {
                    let s = ttcm_sample(fixed_x.as_ref().expect("fixed covariates"), args.rho, seed)?;
                    run.write(&format!("datasets/rep{r:04}.csv"), &dataset_csv(&s.dataset)?)?;
                }
            }
        }
    }

    let results = run_replicates(args.replicates, base, |r, seed| match args.scenario {
        ScenarioArg::Friedman1 => friedman1_replicate(&variants, args, &config, r, seed),
        ScenarioArg::Friedman2 => friedman2_replicate(&variants, args, &config, r, seed),
        ScenarioArg::TtcmLike => {
            let x = fixed_x.as_ref().expect("fixed covariates");
            let rep = cea_replicate(x, args.rho, &variants, &args.lambda, &config, r, seed)?;
            let records = rep.records();
            let metrics = records
                .iter()
                .flat_map(|e| {
                    let v = CeaVariant::parse(&e.variant).expect("known variant");
                    [
                        metric(r, v, e.estimand.clone(), e.estimate),
                        metric(r, v, format!("{}_width", e.estimand), e.upper - e.lower),
                    ]
                })
                .collect();
            Ok((metrics, records))
        }
    });

    let (mut metrics, mut records, mut failures) = (Vec::new(), Vec::new(), Vec::new());
    let mut first_err = None;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok((m, e)) => {
                metrics.extend(m);
                records.extend(e);
            }
            Err(e) => {
                failures.push(json!({"replicate": r, "error": e.to_string()}));
                first_err.get_or_insert(e);
            }
        }
    }
    if metrics.is_empty() && records.is_empty() {
        return Err(first_err.unwrap_or(Error::InsufficientDraws(0)));
    }

    let rows = metrics
        .iter()
        .map(|m| vec![m.replicate.to_string(), m.variant.clone(), m.metric.clone(), fmt_f64(m.value)]);
    run.write("metrics.csv", &csv_bytes(&["replicate", "variant", "metric", "value"], rows)?)?;
    let rows = records.iter().map(|e| {
        vec![
            e.replicate.to_string(),
            e.variant.clone(),
            e.estimand.clone(),
            fmt_f64(e.estimate),
            fmt_f64(e.truth),
            fmt_f64(e.lower),
            fmt_f64(e.upper),
        ]
    });
    run.write(
        "estimates.csv",
        &csv_bytes(&["replicate", "variant", "estimand", "estimate", "truth", "lower", "upper"], rows)?,
    )?;
    let rows = aggregate(&records).into_iter().map(|a| {
        vec![
            a.variant,
            a.estimand,
            a.replicates.to_string(),
            fmt_f64(a.bias),
            fmt_f64(a.sd),
            fmt_f64(a.rmse),
            fmt_f64(a.coverage),
            fmt_f64(a.width),
        ]
    });
    run.write(
        "aggregate.csv",
        &csv_bytes(
            &["variant", "estimand", "replicates", "bias", "sd", "rmse", "coverage", "width"],
            rows,
        )?,
    )?;
    if !failures.is_empty() {
        run.write_json("failures.json", &failures)?;
    }
    Ok(())
}
