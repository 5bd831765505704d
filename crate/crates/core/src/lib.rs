//! Cascaded calibration of position sensors.
//!
//! A test-bed sensor is first calibrated against a reference instrument with
//! Gaussian-process regression; the posterior covariance of that fit is then
//! carried into the calibration of a production sensor against the test bed.
//! The [`montecarlo`] module compares this against a diagonal-noise variant
//! and cascaded lookup tables on synthetic sensors from [`sim`].

// `!(a < b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod config;
pub mod error;
pub mod gp;
pub mod io;
pub mod kernels;
pub mod lut;
pub mod montecarlo;
pub mod numerics;
pub mod sim;
pub mod simplex;

pub use cascade::{CalibrationDataset, CascadeConfig, CascadeModel, MethodTag};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use gp::{GPPosterior, OptimizerConfig, TrainingSet};
pub use kernels::{Hyperparameters, PriorMean};
