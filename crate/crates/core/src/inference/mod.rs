//! Tuning-constant selection, bootstrap standard errors and influence functions.

mod bootstrap;
mod influence;
mod ks;
mod tune;

pub use bootstrap::{bootstrap_se, bootstrap_with_seeds, BootstrapReport, MAX_FAILURE_RATE};
pub use influence::{
    influence, influence_sweep, simplex_lattice, InfluenceOperator, InfluenceResult, SweepReport,
    MAX_G_CONDITION,
};
pub use ks::{kolmogorov_survival, ks_p_value, ks_statistic, ks_truncated, quantile_type7, KsResult};
pub use tune::{tune_c, validate_grid, TunePoint, TuneReport, KS_LEVEL, TRUNCATION_QUANTILE};
pub(crate) use tune::csv_err;
