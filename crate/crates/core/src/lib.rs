//! Score matching for polynomially-tilted pairwise interaction models on the
//! simplex, fitted in additive log-ratio coordinates.
//!
//! The estimator solves linear equations whose coefficients are polynomials in
//! the composition, so observations with exact zeros are used as they are.
//! [`robust`] adds Windham-type down-weighting of points that are improbable
//! under the concentrated block of the model.

pub mod error;
pub mod estimator;
pub mod cli;
pub mod inference;
pub mod io;
mod linalg;
pub mod model;
pub mod robust;
pub mod sampling;
pub mod study;
pub mod suffstats;

pub use error::{Error, Result};
pub use estimator::{assemble, fit_alr_sme, fit_alr_sme_with, fit_from_counts, FitOptions, FitResult};
pub use linalg::{solve_spd, SpdSolution, MAX_CONDITION};
pub use model::{
    alr, alr_inverse, dataset2_estimates, pack, proportions, unpack, Composition, CountDataset, ParamLayout,
    ParamVector, ParamsFile, RppiParams,
};
pub use robust::{fit_robust, fit_robust_weighted, windham_weights, RobustConfig, RobustFitResult};
