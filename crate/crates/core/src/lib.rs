//! Simulation of a solid-state inrush current limiter energizing a
//! single-phase transformer, with a Kalman-filter based gate controller.

// Parameter checks are written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod controller;
pub mod error;
pub mod kf;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod sweep;
pub mod transformer;
pub mod waveform;

pub use error::{Error, Result, Violation};
