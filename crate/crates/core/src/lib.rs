//! Change point detection for piecewise-stationary spherical functional
//! autoregressive processes observed through their real harmonic
//! coefficients `a_{ell,m}(t)`.
//!
//! The pipeline is:
//!
//! * [`simulate`] generates coefficient series from segment models,
//! * [`estimate`] fits per-multipole LASSO autoregressions on intervals,
//! * [`segment`] solves the penalized partitioning problem exactly,
//! * [`eval`] scores estimated change points against the truth.
//!
//! [`diagnostics`] computes causality checks, spectral densities and the
//! quantities entering the theoretical tuning rules.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod io;
pub mod model;
pub mod segment;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{fit_segment_with_intercept, interval_loss, lasso_fit_interval, mean_surface, IntervalFit};
pub use model::{ArCoefficients, CoefficientSeries, DetectorConfig, Lambda, Partition, SegmentSpec};
pub use segment::{detect, objective_of, DetectionResult};
pub use simulate::{simulate, ScenarioSpec};
