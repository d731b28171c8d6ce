//! Simulation, calibration and neural-network correction of ion-selective
//! electrode voltage signals.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the command-line tool uses.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod calibrate;
pub mod chem;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SolutionComposition = chem::SolutionComposition<f64>;
pub type ElectrodeSpec = chem::ElectrodeSpec<f64>;
pub type DilutionSchedule = chem::DilutionSchedule<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type ProtocolConfig = sim::ProtocolConfig<f64>;
pub type Trace = sim::Trace<f64>;
pub type TraceSample = sim::TraceSample<f64>;
pub type CalibrationFit = calibrate::CalibrationFit<f64>;
pub type QuadraticModel = calibrate::QuadraticModel<f64>;
pub type Dataset = nn::Dataset<f64>;
pub type Network = nn::NetworkModel<f64>;
pub type TrainConfig = nn::TrainConfig<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type PipelineConfig = pipeline::PipelineConfig;
