//! CSV ingestion into [`Dataset`]s.

use std::collections::BTreeSet;
use std::path::Path;

use crate::data::dataset::{ColumnKind, ColumnSchema, Covariate, Covariates, Dataset};
use crate::error::{Error, Result};

/// Raw header + string cells as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        Self::from_reader(&mut rdr)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        Self::from_reader(&mut rdr)
    }

    fn from_reader<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<Self> {
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            // the csv crate rejects ragged rows by default
            let rec = rec?;
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        let mut seen = BTreeSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::InvalidColumn {
                    column: h.clone(),
                    message: "duplicate header".into(),
                });
            }
        }
        Ok(RawTable { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` not found")))
    }

    fn numeric_column(&self, idx: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                r[idx].parse::<f64>().map_err(|_| Error::InvalidColumn {
                    column: self.headers[idx].clone(),
                    message: format!("cannot parse `{}` as a number", r[idx]),
                })
            })
            .collect()
    }

    fn string_column(&self, idx: usize) -> Vec<&str> {
        self.rows.iter().map(|r| r[idx].as_str()).collect()
    }
}

/// Which CSV columns play which role.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColumnRoles {
    pub outcomes: Vec<String>,
    pub categorical: Vec<String>,
    pub treatment: Option<String>,
    /// Columns to drop entirely (ids and the like).
    pub ignore: Vec<String>,
}

/// Sort labels numerically when all of them parse as numbers, else lexically.
fn sorted_levels(values: &[&str]) -> Vec<String> {
    let set: BTreeSet<&str> = values.iter().copied().collect();
    let mut levels: Vec<String> = set.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        levels = pairs.into_iter().map(|p| p.1).collect();
    }
    levels
}

fn categorical_from_labels(name: &str, labels: &[&str], levels: &[String]) -> Result<Covariate> {
    let idx = labels
        .iter()
        .map(|l| {
            levels
                .iter()
                .position(|lv| lv == l)
                .ok_or_else(|| Error::UnknownCategoryLevel {
                    column: name.to_string(),
                    level: l.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Covariate::categorical(name, levels.to_vec(), idx))
}

/// Build an unvalidated dataset; run [`crate::data::validate_dataset`] afterwards.
pub fn dataset_from_table(table: &RawTable, roles: &ColumnRoles) -> Result<Dataset> {
    if table.rows.is_empty() {
        return Err(Error::EmptyData("CSV has no data rows".into()));
    }
    if roles.outcomes.is_empty() {
        return Err(Error::InvalidConfig("no outcome columns declared".into()));
    }
    for c in &roles.categorical {
        table.column_index(c)?;
    }
    let mut outcomes = Vec::new();
    for name in &roles.outcomes {
        outcomes.push(table.numeric_column(table.column_index(name)?)?);
    }
    let treatment = match &roles.treatment {
        Some(t) => Some(table.numeric_column(table.column_index(t)?)?),
        None => None,
    };
    let mut columns = Vec::new();
    for (idx, name) in table.headers.iter().enumerate() {
        if roles.outcomes.contains(name)
            || roles.treatment.as_ref() == Some(name)
            || roles.ignore.contains(name)
        {
            continue;
        }
        if roles.categorical.contains(name) {
            let labels = table.string_column(idx);
            let levels = sorted_levels(&labels);
            columns.push(categorical_from_labels(name, &labels, &levels)?);
        } else {
            columns.push(Covariate::continuous(name.clone(), table.numeric_column(idx)?));
        }
    }
    Ok(Dataset {
        covariates: Covariates::new(columns)?,
        outcome_names: roles.outcomes.clone(),
        outcomes,
        treatment,
    })
}

/// Read covariates for prediction, following a training schema. Extra columns are ignored.
pub fn covariates_from_table(table: &RawTable, schema: &[ColumnSchema]) -> Result<Covariates> {
    let mut columns = Vec::with_capacity(schema.len());
    for s in schema {
        let idx = table.column_index(&s.name)?;
        match &s.kind {
            ColumnKind::Continuous => {
                columns.push(Covariate::continuous(s.name.clone(), table.numeric_column(idx)?))
            }
            ColumnKind::Categorical { levels } => {
                let labels = table.string_column(idx);
                columns.push(categorical_from_labels(&s.name, &labels, levels)?);
            }
        }
    }
    Covariates::new(columns)
}
