//! Pituitary-thyroid feedback model with methimazole pharmacology, a stiff
//! integrator and a discrete-dose model predictive controller.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bdf;
pub mod error;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod mpc;
pub mod params;
pub mod pk;
pub mod scenario;
pub mod sim;
pub mod steady;
pub mod thyroid;

pub use error::{Error, Result};
pub use params::{IodideRegime, Model, ParameterSet, Pdt2Params, PkParams, ThyroidParams, TpoSigmoidParams};
pub use pk::{DoseEvent, DoseSchedule, Route};
pub use thyroid::HormoneState;

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
