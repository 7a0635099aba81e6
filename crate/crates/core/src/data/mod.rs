//! Datasets, outcome scaling and CSV ingestion.

mod dataset;
mod scaling;
mod table;

pub use dataset::{
    validate_dataset, ColumnKind, ColumnSchema, Covariate, Covariates, Dataset, OutcomeMode,
};
pub use scaling::{fit_scaler, OutcomeScaler};
pub use table::{covariates_from_table, dataset_from_table, ColumnRoles, RawTable};
