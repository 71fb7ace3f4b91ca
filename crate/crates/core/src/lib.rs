//! Distributional index models.
//!
//! A two-stage estimator of conditional distributions: a parametric
//! pseudo-index reduces the covariates to one real number, and isotonic
//! distributional regression (IDR) estimates a stochastically ordered family
//! of CDFs on that index. Predictions are step CDFs, scored exactly with the
//! CRPS and checked for calibration with reliability bins and PIT histograms.
//!
//! With the default `parallel` feature, IDR thresholds, bagging members,
//! prediction rows and simulation replications run on rayon; see
//! [`Execution`]. Results are identical either way.

pub mod data;
pub mod dim;
pub mod error;
pub mod eval;
pub mod exec;
pub mod idr;
pub mod index;
pub mod sim;
pub mod stepdist;

pub use dim::{fit_dim, predict_dim, Covariates, DimConfig, DimModel, IndexSource};
pub use error::{Error, Result};
pub use exec::Execution;
pub use idr::{IdrFit, TrainingPairs};
pub use index::{DesignMatrix, IndexModel, ResponseTransform};
pub use stepdist::{mixture, StepDistribution, ThresholdMeasure};
