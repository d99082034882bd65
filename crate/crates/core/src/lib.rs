//! Monotone baseline hazard estimation in the Cox proportional hazards model.
//!
//! Two isotonized smooth estimators are provided: the maximum smoothed
//! likelihood estimator ([`estimators::msle`]) and the isotonized smoothed
//! Breslow estimator ([`estimators::isbe`]), along with their naive
//! counterparts, pointwise confidence intervals and a simulation harness.

pub mod coxfit;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod isotonic;
pub mod kernels;
pub mod nonparam;
pub mod rng;
pub mod sim;
pub mod smoothing;

pub use data::{Dataset, HazardCurve, Observation, StepFunction};
pub use error::{Error, Result};
pub use estimators::{BetaSource, Method, Settings};
pub use inference::{CiMethod, CiResult};
pub use kernels::{Kernel, Triweight};
