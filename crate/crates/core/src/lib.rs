//! Multi-path tracking of probabilistic available bandwidth (PAB).
//!
//! The engine combines chirp-based probing, discrete belief propagation over
//! a link/path factor graph, and a per-link Gaussian-mixture particle filter
//! to track the PAB of every path in a fixed routing topology. A network
//! simulator and block-based baseline estimators are included for evaluation,
//! together with a UDP probe engine for live measurement.

// Validation guards spell `!(x > y)` so NaN fails closed, and numeric loops
// keep index form where they mirror windowed/grid math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod belief;
pub mod chirp;
pub mod config;
pub mod error;
pub mod estimator;
pub mod factor_graph;
pub mod grid;
pub mod likelihood;
pub mod probe;
pub mod sim;
pub mod topology;
pub mod tracker;

pub use error::PabError;
pub use grid::{Pmf, RateGrid};
