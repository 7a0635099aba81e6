use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-outcome min-max map onto [-0.5, 0.5].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl OutcomeScaler {
    /// The identity map, used for latent-scale (probit) chains.
    pub fn identity(d: usize) -> Self {
        OutcomeScaler {
            min: vec![-0.5; d],
            max: vec![0.5; d],
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.min.len()
    }

    /// `max_j - min_j`.
    #[inline]
    pub fn range(&self, j: usize) -> f64 {
        self.max[j] - self.min[j]
    }

    #[inline]
    pub fn forward(&self, j: usize, y: f64) -> f64 {
        (y - self.min[j]) / self.range(j) - 0.5
    }

    #[inline]
    pub fn inverse(&self, j: usize, s: f64) -> f64 {
        (s + 0.5) * self.range(j) + self.min[j]
    }

    pub fn forward_column(&self, j: usize, col: &[f64]) -> Vec<f64> {
        col.iter().map(|&y| self.forward(j, y)).collect()
    }

    pub fn inverse_column(&self, j: usize, col: &[f64]) -> Vec<f64> {
        col.iter().map(|&s| self.inverse(j, s)).collect()
    }

    /// Convert a scaled-unit covariance (row-major d×d) to original units.
    pub fn unscale_covariance(&self, sigma: &[f64]) -> Vec<f64> {
        let d = self.n_outcomes();
        let mut out = sigma.to_vec();
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] *= self.range(r) * self.range(c);
            }
        }
        out
    }
}

pub fn fit_scaler(outcomes: &[Vec<f64>], names: &[String]) -> Result<OutcomeScaler> {
    let mut min = Vec::with_capacity(outcomes.len());
    let mut max = Vec::with_capacity(outcomes.len());
    for (j, col) in outcomes.iter().enumerate() {
        if col.is_empty() {
            return Err(Error::EmptyData("outcome column has no rows".into()));
        }
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("y{j}"));
            return Err(Error::ConstantOutcome(name));
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(OutcomeScaler { min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("y{j}")).collect()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = fit_scaler(&[vec![0.0, 10.0]], &names(1)).unwrap();
        assert_eq!(s.forward(0, 0.0), -0.5);
        assert_eq!(s.forward(0, 10.0), 0.5);
        assert_eq!(s.forward(0, 5.0), 0.0);
    }

    #[test]
    fn round_trip_zero() {
        let s = fit_scaler(&[vec![-4.0, 0.0, 4.0]], &names(1)).unwrap();
        assert_eq!(s.inverse(0, s.forward(0, 0.0)), 0.0);
    }

    #[test]
    fn constant_column() {
        let err = fit_scaler(&[vec![1.0, 2.0], vec![3.0, 3.0]], &names(2)).unwrap_err();
        assert!(matches!(err, Error::ConstantOutcome(n) if n == "y1"));
    }

    #[test]
    fn covariance_unscaling() {
        let s = fit_scaler(&[vec![0.0, 2.0], vec![0.0, 10.0]], &names(2)).unwrap();
        let out = s.unscale_covariance(&[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(out, vec![4.0, 10.0, 10.0, 100.0]);
    }

    proptest! {
        #[test]
        fn round_trip_identity(col in prop::collection::vec(-1e6f64..1e6, 2..40)) {
            prop_assume!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                > col.iter().cloned().fold(f64::INFINITY, f64::min) + 1e-6);
            let s = fit_scaler(&[col.clone()], &names(1)).unwrap();
            for &y in &col {
                let back = s.inverse(0, s.forward(0, y));
                prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(s.range(0)));
            }
        }

        #[test]
        fn scaled_bounds(col in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi > lo);
            let s = fit_scaler(&[col.clone()], &names(1)).unwrap();
            for &y in &col {
                let f = s.forward(0, y);
                if y == lo {
                    prop_assert_eq!(f, -0.5);
                } else if y == hi {
                    prop_assert_eq!(f, 0.5);
                } else {
                    prop_assert!(f > -0.5 && f < 0.5);
                }
            }
        }
    }
}
