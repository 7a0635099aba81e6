use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Seed for replicate `index` derived from `base` by one SplitMix64 step.
pub fn replicate_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run `f(index, seed)` for every replicate; failures are kept, not raised.
pub fn run_replicates<T, F>(replicates: usize, base_seed: u64, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|r| f(r, replicate_seed(base_seed, r as u64)))
        .collect()
}

/// One point estimate with its interval and the truth it targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub replicate: usize,
    pub variant: String,
    pub estimand: String,
    pub estimate: f64,
    pub truth: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Bias, SD, RMSE, interval coverage and width over replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub estimand: String,
    pub replicates: usize,
    pub bias: f64,
    /// Across-replicate SD of the estimates (R - 1 denominator).
    pub sd: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub width: f64,
}

/// Aggregate records grouped by (variant, estimand), in first-seen order.
pub fn aggregate(records: &[EstimateRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.variant.clone(), r.estimand.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(variant, estimand)| {
            let rs: Vec<&EstimateRecord> = records
                .iter()
                .filter(|r| r.variant == variant && r.estimand == estimand)
                .collect();
            let n = rs.len() as f64;
            let err: Vec<f64> = rs.iter().map(|r| r.estimate - r.truth).collect();
            let est: Vec<f64> = rs.iter().map(|r| r.estimate).collect();
            let bias = err.iter().sum::<f64>() / n;
            let sd = if rs.len() > 1 { crate::stats::sd(&est) } else { 0.0 };
            let rmse = (err.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
            let coverage = rs.iter().filter(|r| r.lower <= r.truth && r.truth <= r.upper).count() as f64 / n;
            let width = rs.iter().map(|r| r.upper - r.lower).sum::<f64>() / n;
            AggregateRow {
                variant,
                estimand,
                replicates: rs.len(),
                bias,
                sd,
                rmse,
                coverage,
                width,
            }
        })
        .collect()
}
