//! Personalized angle (PAN) regression.
//!
//! PAN regression penalizes the squared cosine between the coefficient vector
//! and the covariate vector `x0` being predicted, so every prediction target
//! gets its own coefficients. Combined with a ridge penalty it yields the
//! PAN-ridge estimator. The crate provides closed forms for orthonormal
//! designs, a numerical solver for general designs, parametric-bootstrap
//! tuning, cross-validation, analytic mean-squared-error results and a
//! simulation harness.

pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod parallel;
pub mod simulation;
pub mod theory;
pub mod tuning;

pub use error::{PanError, Result};
