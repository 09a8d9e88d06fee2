//! Online monitoring of the cross-covariance between two data streams.
//!
//! The chart keeps an exponentially weighted estimate of `Σ̂ₜ − Σ₀` as a
//! rank-bounded thin SVD and updates it with one small core SVD per
//! observation pair, so a step costs `O((p + q)·k²)` instead of a dense
//! `p×q` decomposition. The leading singular value is the monitoring
//! statistic; a new rank-one correlated pattern between the streams pushes it
//! over the control limit.
//!
//! Numerical code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix `f64`, which every simulation routine uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod calibration;
pub mod error;
pub mod experiments;
pub mod model;
pub mod monitor;
pub mod scalar;
pub mod seed;
pub mod svd;

pub use calibration::{ArlEstimate, CalibrationResult, CalibrationSpec, Method, RunLength};
pub use error::{Error, Result};
pub use monitor::{Chart, ChartPoint, MonitorConfig};
pub use scalar::Scalar;

pub type FactoredMatrix = svd::FactoredMatrix<f64>;
pub type FactoredMatrix32 = svd::FactoredMatrix<f32>;
pub type ProcessModel = model::ProcessModel<f64>;
pub type Subgroup = model::Subgroup<f64>;
pub type MonitorState = monitor::MonitorState<f64>;
pub type MonitorState32 = monitor::MonitorState<f32>;
pub type Sigma0Factors = monitor::Sigma0Factors<f64>;
pub type DenseChartState = baseline::DenseChartState<f64>;
