//! Sequential Monte Carlo with online asymptotic-variance estimation.
//!
//! The crate is organised around a bootstrap particle filter with multinomial
//! resampling ([`filter`]) and a family of estimators of the asymptotic variance
//! of its outputs:
//!
//! - [`genealogy`]: estimators built from the ancestral lineages (Chan-Lai,
//!   fixed-lag, and an online genealogy-tracing term-by-term estimator).
//! - [`backward`]: estimators built from the backward weights, propagated with
//!   dense `N x N` recursions.
//! - [`paris`]: the same statistics estimated with `M` sampled backward indices
//!   per particle, at `O(M N^2)` cost per step.
//! - [`smoothing`]: forward-only FFBS for additive functionals and the online
//!   variance estimator for marginal smoothing.
//!
//! [`oracle`] holds exact computations on finite state spaces and the
//! brute-force replication estimator used to validate everything else, and
//! [`experiment`] drives the command-line experiments.

pub mod backward;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod genealogy;
mod linalg;
pub mod model;
pub mod models;
pub mod oracle;
pub mod paris;
pub mod resample;
pub mod rng;
pub mod smoothing;

pub use backward::{BackwardMatrix, BsStats, MaskStats};
pub use error::{Error, Result};
pub use filter::{FilterConfig, FilterState};
pub use genealogy::GtStats;
pub use model::Model;
pub use paris::ParisStats;
pub use rng::RngStream;
pub use smoothing::SmoothingStats;

/// Dense matrix type used for every `N x N` statistic.
pub type Matrix = faer::Mat<f64>;
