//! Numerical core of a desk-scale digital twin for a synthetic urban district
//! exposed to a compound heatwave, rolling power outages and wildfire smoke.
//!
//! The crate is `no_std` (with `alloc`). Every stage is a pure function of its
//! inputs and a `u64` seed:
//!
//! ```text
//! district -> scenario -> thermal truth -> sensing -> fusion / Kalman
//!          -> calibration -> affiliation graph -> equity risk -> interventions
//! ```
//!
//! File formats, the pipeline driver and the CLI live in the `hazard-twin`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod affiliation;
pub mod calibration;
pub mod district;
pub mod equity;
mod error;
pub mod fusion;
pub mod intervention;
pub mod matrix;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod sensing;
pub mod spatial;
pub mod stats;
pub mod thermal;

pub use error::{Error, Result};
pub use matrix::SeriesMatrix;
