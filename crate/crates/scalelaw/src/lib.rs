//! Fitting, evaluation, and extrapolation of multivariate neural scaling
//! law functional forms.
//!
//! The crate models an evaluation metric y as a composition of smoothly
//! broken power-law kernels over resource quantities x (parameters, data,
//! training steps, ...), with additive floors, saturation limits, and
//! oppositional force terms. It provides:
//!
//! - [`forms`] — numerically stable evaluation and exact gradients of the
//!   full form family (UNSL and ablations A1/A2/A3) and the CF/DC
//!   baselines;
//! - [`algebra`] — closed-form kernel manipulations (additive two-term ↔
//!   single-break conversion, tangent hyperplanes in multi-log space);
//! - [`metrics`] — RMSLE and its dispersion companion;
//! - [`data`] — dataset loading, log-space normalization, and the
//!   threshold / Pareto-frontier split procedures;
//! - [`fit`] — deterministic multi-start fitting and model selection;
//! - [`analysis`] — noiseless simulation, compute-optimal allocation, and
//!   multi-form comparison tables.

pub mod algebra;
pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod fit;
pub mod fixtures;
pub mod forms;
pub mod metrics;
pub mod numerics;

pub use error::{Error, Result};
