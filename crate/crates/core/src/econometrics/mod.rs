//! Regression and synthetic-control estimators for event panels.

mod covariance;
pub mod covariates;
pub mod did;
pub mod inference;
pub mod ols;
pub mod sdid;
pub mod simplex;
pub mod spec;

pub use covariates::{standardize_panel_covariates, variance_inflation, zscore_covariates};
pub use did::{did, event_study, lagged_did, multi_period_did, DidOptions, LagEstimate, LaggedDid, REFERENCE_LAG};
pub use inference::{ci95, stars, two_sided_p, Z95};
pub use ols::{fit, ols, Design, RegressionResult};
pub use sdid::{sdid, sdid_sweep, PlaceboScheme, SdidOptions, SdidResult, SUBSET_PLACEBO_BELOW};
pub use spec::{Clustering, Factor, RegressionSpec, Term};
