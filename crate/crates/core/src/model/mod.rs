//! Shared domain types, deterministic randomness and elementary math.

mod math;
mod prbs;
mod rng;
mod symbol;

pub use math::{binary_entropy, db_to_transmittance, dbm_to_mw, poisson_sample, PoissonCdf};
pub use prbs::{Prbs7, Prbs7State, PRBS7_PERIOD};
pub use rng::{uniform_f64, RngStream};
pub use symbol::{detector_basis, Basis, IntensityLevel, IntensityTable, QuantumSymbol};
