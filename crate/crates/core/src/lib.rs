//! Joint clustering, segmentation and regression of panels of time series.
//!
//! Each individual (a time series) belongs to one latent cluster. Within a
//! cluster, every time step belongs to a latent segment whose prior is a
//! softmax that is linear in time, with slopes forced apart so that segments
//! are contiguous. Observations are Gaussian around a per-(cluster, segment)
//! linear regression on exogenous covariates. Parameters are estimated by EM.
//!
//! Module map:
//!
//! - [`panel`]: dataset container, covariate builders, ridership preprocessing, CSV I/O.
//! - [`model`]: parameters, densities, log-likelihood, parameter counting.
//! - [`em`]: E-step, M-step orchestration, initialization, fit loop, MAP partition.
//! - [`segopt`]: the constrained segment-prior subproblem of the M-step.
//! - [`wls`]: the weighted regression subproblem of the M-step.
//! - [`synth`]: synthetic data with known ground truth.
//! - [`pipelines`]: the proposed model and the sequential / covariate-free baselines.
//! - [`eval`]: adjusted Rand index, cross-validation, slope heuristic.

pub mod em;
pub mod error;
pub mod eval;
pub mod model;
pub mod panel;
pub mod pipelines;
pub mod segopt;
pub mod synth;
pub mod util;
pub mod wls;

pub use error::{Error, Result};
pub use model::{CovarianceKind, FitConfig, ModelParams};
pub use panel::PanelDataset;
