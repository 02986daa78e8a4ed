//! Joint user association and reuse-pattern bandwidth allocation for
//! heterogeneous (macro + pico) cellular networks.
//!
//! The pipeline is:
//!
//! 1. [`scenario`] drops cells and users and computes large-scale gains.
//! 2. [`patterns`] builds the ON/OFF reuse patterns that bandwidth is split over.
//! 3. [`rates`] turns gains into per-pattern spectral efficiencies.
//! 4. [`allocator`] evaluates the weighted log-utility and solves for the
//!    bandwidth split at a fixed association (Frank-Wolfe on the simplex).
//! 5. [`search`] runs tabu search over associations and bandwidth splits.
//! 6. [`oracle`] holds exhaustive references for small instances.
//! 7. [`harness`] drives baselines, pattern studies and reporting.
//!
//! Cell and user indices are 0-based throughout the API. Files and pattern
//! strings use 1-based cell labels.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod association;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod patterns;
pub mod rates;
pub mod scenario;
pub mod search;

pub use association::Association;
pub use error::{Error, Result};
pub use patterns::{Pattern, PatternSet};
pub use rates::RateTensor;
pub use scenario::{GainTable, Scenario, ScenarioConfig};

/// Converts a dB (or dBm) value to linear scale (or mW).
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to dB.
#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
