//! Performance-based learning-rate control for SGD on streaming data batches.
//!
//! The crate is generic over the floating point type through [`Scalar`]; the
//! `*64` / `*32` aliases below fix it for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod plant;
pub mod report;
pub mod scalar;
pub mod schedule;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Schedule64 = schedule::Schedule<f64>;
pub type Schedule32 = schedule::Schedule<f32>;
pub type Controller64 = schedule::Controller<f64>;
pub type Controller32 = schedule::Controller<f32>;
pub type Network64 = plant::Network<f64>;
pub type Network32 = plant::Network<f32>;
pub type LabeledSet64 = plant::LabeledSet<f64>;
pub type LabeledSet32 = plant::LabeledSet<f32>;
pub type ExperimentConfig64 = harness::ExperimentConfig<f64>;
pub type Trace64 = harness::Trace<f64>;
pub type MetricsSummary64 = metrics::MetricsSummary<f64>;
