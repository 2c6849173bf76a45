//! Mean-square extrapolation for stochastic sequences with stationary increments.
//!
//! The crate works with sequences whose n-th order increments (taken at step `mu`)
//! are stationary. Everything is organized around the spectral density `f` of the
//! underlying sequence and the induced increment density `g(lambda) * f(lambda)`,
//! where `g` is the deterministic increment kernel.
//!
//! Modules:
//!
//! - [`grid`]: uniform midpoint frequency grids on `[-pi, pi)`, gridded densities,
//!   periodic quadrature and CSV import/export.
//! - [`spectral`]: increment kernel evaluation, canonical (minimum-phase) spectral
//!   factorization via the real cepstrum, and the outer factor of the kernel.
//! - [`increments`]: coefficient machinery translating linear functionals of raw
//!   values into functionals of increments (transfer matrices, Hankel forms,
//!   boundary weights).
//! - [`extrapolate`]: optimal one-sided estimates — spectral characteristics,
//!   mean-square errors, increment/value prediction and functional estimation,
//!   plus time-domain filter weights.
//! - [`minimax`]: least-favorable spectral densities over four density classes and
//!   saddle-point verification of the robust estimates.
//! - [`simulate`]: Monte Carlo generation of increment paths, integration back to
//!   raw sequences, and empirical validation of the analytic error formulas.

pub mod error;
pub mod extrapolate;
pub mod fourier;
pub mod grid;
pub mod increments;
pub mod minimax;
pub mod poly;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{DensityGrid, FrequencyGrid};
pub use spectral::IncrementSpec;

/// Crate version, embedded in artifact manifests by downstream tools.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default relative tolerance for factorization reconstruction checks.
pub const DEFAULT_FACTOR_TOL: f64 = 1e-8;

/// Relative floor applied to densities with isolated zeros before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-14;

/// Default truncation length for factor coefficient sequences.
pub const DEFAULT_FACTOR_LEN: usize = 512;

/// Default horizon for time-domain filter weights.
pub const DEFAULT_FILTER_HORIZON: usize = 512;

/// Default truncation for operators acting on infinite functionals.
pub const DEFAULT_OPERATOR_TRUNCATION: usize = 256;

/// Coefficients smaller than this (relative to the largest) are clamped to zero
/// when weights are reported.
pub const WEIGHT_CLAMP: f64 = 1e-14;

/// Damping factor for least-favorable-density fixed-point iterations.
pub const FIXED_POINT_DAMPING: f64 = 0.5;

/// Iteration budget for least-favorable-density fixed points.
pub const FIXED_POINT_MAX_ITER: usize = 500;

/// Sup-norm convergence threshold for fixed-point iterations.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Margin used when deciding whether a polynomial root lies inside the unit disk.
/// Roots on the circle (within the margin) are accepted: increment densities
/// legitimately vanish at the kernel zeros.
pub const MIN_PHASE_MARGIN: f64 = 1e-6;
