//! Simulator and analysis toolkit for a 625 MHz time-bin BB84 link with WDM
//! clock synchronization, gated single-photon detection and three-intensity
//! decoy-state key rate estimation.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod decoy;
pub mod distill;
pub mod error;
pub mod model;
pub mod optics;
pub mod presets;
pub mod report;
pub mod reproduce;
pub mod simulate;
pub mod stats_table;
pub mod timing;

pub use error::{Error, Result};
pub use simulate::{AliceSource, DoubleClickPolicy, LinkScenario};
