use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the sampler treats the outcome matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeMode {
    Continuous,
    Probit,
}

/// Column type of a covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    /// Values are level indices `0..levels.len()`; `levels` holds the labels.
    Categorical { levels: Vec<String> },
}

impl ColumnKind {
    pub fn n_levels(&self) -> Option<usize> {
        match self {
            ColumnKind::Continuous => None,
            ColumnKind::Categorical { levels } => Some(levels.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

impl Covariate {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Covariate {
            name: name.into(),
            kind: ColumnKind::Continuous,
            values,
        }
    }

    /// Build a categorical column from level indices and labels.
    pub fn categorical(name: impl Into<String>, levels: Vec<String>, indices: Vec<usize>) -> Self {
        Covariate {
            name: name.into(),
            kind: ColumnKind::Categorical { levels },
            values: indices.into_iter().map(|i| i as f64).collect(),
        }
    }

    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            name: self.name.clone(),
            kind: self.kind.clone(),
        }
    }
}

/// Column-major covariate table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub columns: Vec<Covariate>,
}

impl Covariates {
    pub fn new(columns: Vec<Covariate>) -> Result<Self> {
        let cov = Covariates { columns };
        cov.check_lengths()?;
        Ok(cov)
    }

    fn check_lengths(&self) -> Result<()> {
        if let Some(first) = self.columns.first() {
            let n = first.values.len();
            for c in &self.columns {
                if c.values.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "column `{}` has {} rows, expected {}",
                        c.name,
                        c.values.len(),
                        n
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col].values[row]
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns.iter().map(Covariate::schema).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Returns a copy with one extra column appended.
    pub fn with_column(&self, column: Covariate) -> Result<Self> {
        let mut cols = self.columns.clone();
        cols.push(column);
        Covariates::new(cols)
    }

    /// Returns a copy where column `col` holds the constant `value` on every row.
    pub fn with_constant(&self, col: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.columns[col].values.iter_mut().for_each(|v| *v = value);
        out
    }

    /// Select a subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Covariates {
            columns: self
                .columns
                .iter()
                .map(|c| Covariate {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                    values: rows.iter().map(|&r| c.values[r]).collect(),
                })
                .collect(),
        }
    }

    /// Verify that this table follows `schema` (same names, kinds, and level sets).
    pub fn check_schema(&self, schema: &[ColumnSchema]) -> Result<()> {
        if self.columns.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} covariates, found {}",
                schema.len(),
                self.columns.len()
            )));
        }
        for (c, s) in self.columns.iter().zip(schema) {
            if c.name != s.name || c.kind != s.kind {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` does not match training column `{}`",
                    c.name, s.name
                )));
            }
        }
        Ok(())
    }
}

/// Covariates plus a `d`-column outcome matrix and an optional treatment vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub covariates: Covariates,
    pub outcome_names: Vec<String>,
    /// Column-major: `outcomes[j][i]` is outcome `j` of row `i`.
    pub outcomes: Vec<Vec<f64>>,
    pub treatment: Option<Vec<f64>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.covariates.n_rows()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_cols()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    /// A dataset with the same covariates and a single outcome column.
    pub fn single_outcome(&self, name: &str, values: Vec<f64>) -> Dataset {
        Dataset {
            covariates: self.covariates.clone(),
            outcome_names: vec![name.to_string()],
            outcomes: vec![values],
            treatment: self.treatment.clone(),
        }
    }
}

/// Check every dataset invariant and compact categorical levels to `0..L-1`.
pub fn validate_dataset(raw: Dataset, mode: OutcomeMode) -> Result<Dataset> {
    let mut ds = raw;
    let n = ds.n_rows();
    if ds.covariates.n_cols() == 0 {
        return Err(Error::EmptyData("no covariates".into()));
    }
    if n < 2 {
        return Err(Error::EmptyData(format!("{n} rows; at least 2 required")));
    }
    if ds.outcomes.is_empty() {
        return Err(Error::EmptyData("no outcome columns".into()));
    }
    if ds.outcome_names.len() != ds.outcomes.len() {
        return Err(Error::DimensionMismatch(
            "outcome names and outcome columns differ in count".into(),
        ));
    }
    ds.covariates.check_lengths()?;

    for (name, col) in ds.outcome_names.iter().zip(&ds.outcomes) {
        if col.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcome `{name}` has {} rows, covariates have {n}",
                col.len()
            )));
        }
        if let Some(bad) = col.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidColumn {
                column: name.clone(),
                message: format!("non-finite value {bad}"),
            });
        }
        match mode {
            OutcomeMode::Probit => {
                if let Some(&bad) = col.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::NonBinaryOutcome {
                        column: name.clone(),
                        value: bad,
                    });
                }
            }
            OutcomeMode::Continuous => {
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi <= lo {
                    return Err(Error::ConstantOutcome(name.clone()));
                }
            }
        }
    }

    if let Some(t) = &ds.treatment {
        if t.len() != n {
            return Err(Error::DimensionMismatch("treatment length".into()));
        }
        if let Some(&bad) = t.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidColumn {
                column: "treatment".into(),
                message: format!("treatment must be 0/1, found {bad}"),
            });
        }
    }

    for col in &mut ds.covariates.columns {
        if let Some(bad) = col.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidColumn {
                column: col.name.clone(),
                message: format!("non-finite value {bad}"),
            });
        }
        if let ColumnKind::Categorical { levels } = &col.kind {
            let mut used = vec![false; levels.len()];
            for &v in &col.values {
                let idx = v as usize;
                if v < 0.0 || v.fract() != 0.0 || idx >= levels.len() {
                    return Err(Error::InvalidColumn {
                        column: col.name.clone(),
                        message: format!("level index {v} outside 0..{}", levels.len()),
                    });
                }
                used[idx] = true;
            }
            let mut remap = vec![usize::MAX; levels.len()];
            let mut kept = Vec::new();
            for (old, &u) in used.iter().enumerate() {
                if u {
                    remap[old] = kept.len();
                    kept.push(levels[old].clone());
                }
            }
            if kept.len() < 2 {
                return Err(Error::InvalidColumn {
                    column: col.name.clone(),
                    message: "categorical column needs at least two observed levels".into(),
                });
            }
            if kept.len() > crate::trees::MAX_CATEGORY_LEVELS {
                return Err(Error::InvalidColumn {
                    column: col.name.clone(),
                    message: format!(
                        "{} levels exceeds the supported maximum of {}",
                        kept.len(),
                        crate::trees::MAX_CATEGORY_LEVELS
                    ),
                });
            }
            for v in &mut col.values {
                *v = remap[*v as usize] as f64;
            }
            col.kind = ColumnKind::Categorical { levels: kept };
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(outcome: Vec<f64>) -> Dataset {
        let n = outcome.len();
        Dataset {
            covariates: Covariates::new(vec![Covariate::continuous(
                "x",
                (0..n).map(|i| i as f64).collect(),
            )])
            .unwrap(),
            outcome_names: vec!["y".into()],
            outcomes: vec![outcome],
            treatment: None,
        }
    }

    #[test]
    fn constant_outcome_rejected() {
        let err = validate_dataset(toy(vec![3.0; 5]), OutcomeMode::Continuous).unwrap_err();
        assert!(matches!(err, Error::ConstantOutcome(_)));
    }

    #[test]
    fn non_binary_probit_rejected() {
        let err = validate_dataset(toy(vec![0.0, 1.0, 2.0]), OutcomeMode::Probit).unwrap_err();
        assert!(matches!(err, Error::NonBinaryOutcome { value, .. } if value == 2.0));
    }

    #[test]
    fn too_few_rows() {
        let err = validate_dataset(toy(vec![1.0]), OutcomeMode::Continuous).unwrap_err();
        assert!(matches!(err, Error::EmptyData(_)));
    }

    #[test]
    fn categorical_levels_compacted() {
        let mut ds = toy(vec![0.0, 1.0, 2.0, 3.0]);
        ds.covariates.columns.push(Covariate::categorical(
            "c",
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![1, 3, 3, 1],
        ));
        let ds = validate_dataset(ds, OutcomeMode::Continuous).unwrap();
        let col = &ds.covariates.columns[1];
        assert_eq!(col.values, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(
            col.kind,
            ColumnKind::Categorical {
                levels: vec!["b".into(), "d".into()]
            }
        );
    }

    #[test]
    fn ttcm_shaped_table_accepted() {
        let n = 140;
        let mut cols = Vec::new();
        for k in 0..11 {
            cols.push(Covariate::continuous(
                format!("x{k}"),
                (0..n).map(|i| ((i * (k + 3)) % 17) as f64).collect(),
            ));
        }
        let ds = Dataset {
            covariates: Covariates::new(cols).unwrap(),
            outcome_names: vec!["c".into(), "q".into()],
            outcomes: vec![
                (0..n).map(|i| 2000.0 + i as f64).collect(),
                (0..n).map(|i| 0.5 + 0.001 * i as f64).collect(),
            ],
            treatment: Some((0..n).map(|i| (i % 2) as f64).collect()),
        };
        let ds = validate_dataset(ds, OutcomeMode::Continuous).unwrap();
        assert_eq!((ds.n_rows(), ds.n_covariates(), ds.n_outcomes()), (140, 11, 2));
    }
}
