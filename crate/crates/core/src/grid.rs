//! Uniform midpoint frequency grids and gridded spectral densities.
//!
//! # Purpose
//!
//! All quadrature in this crate runs on a uniform midpoint grid over
//! `[-pi, pi)`: `lambda_j = -pi + (j + 1/2) * (2*pi / G)` for `j = 0..G-1`.
//!
//! # Key behaviors
//!
//! - The size `G` must be a power of two. Midpoints of a power-of-two grid
//!   never coincide with `lambda = 0` or with any increment-kernel zero
//!   `2*pi*k/mu` for `mu <= G/2`; this is what makes pointwise evaluation of
//!   kernels and characteristics safe without special-casing nodes. (Evenness
//!   alone is not enough: with `G = 10`, `mu = 4` a node lands exactly on
//!   `pi/2`.) Powers of two also keep the FFT path exact.
//! - Periodic quadrature uses the midpoint rule, which for smooth periodic
//!   integrands is spectrally accurate and integrates trigonometric
//!   polynomials of degree below `G` exactly.
//!
//! # Conventions
//!
//! Densities are plain samples `f(lambda_j) >= 0`. "Power" always means the
//! normalized integral `(1/2pi) * integral of f`, i.e. `mean(values)` on the
//! grid.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Uniform midpoint grid on `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    size: usize,
    nodes: Vec<f64>,
}

/// Default grid size.
pub const DEFAULT_GRID_SIZE: usize = 4096;

/// Largest grid size refinement is allowed to reach.
pub const MAX_GRID_SIZE: usize = 65536;

/// Hard upper bound on grid sizes the type accepts. Internal oversampled
/// grids (used while factoring sampled densities) may exceed the refinement
/// ceiling, but never this.
pub const GRID_SIZE_LIMIT: usize = 1 << 20;

impl FrequencyGrid {
    /// Builds a grid with `size` midpoint nodes. `size` must be a power of two
    /// in `[8, 65536]`.
    pub fn new(size: usize) -> Result<Self> {
        if !size.is_power_of_two() || size < 8 || size > GRID_SIZE_LIMIT {
            return Err(Error::DomainError {
                what: format!("grid size {size} must be a power of two in [8, {GRID_SIZE_LIMIT}]"),
            });
        }
        let step = 2.0 * std::f64::consts::PI / size as f64;
        let nodes = (0..size)
            .map(|j| -std::f64::consts::PI + (j as f64 + 0.5) * step)
            .collect();
        Ok(FrequencyGrid { size, nodes })
    }

    /// Grid with the default size.
    pub fn default_size() -> Self {
        FrequencyGrid::new(DEFAULT_GRID_SIZE).expect("default size is valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Node spacing `2*pi / G`.
    pub fn step(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.size as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    /// Grid of twice the size, if still within the refinement ceiling.
    pub fn refined(&self) -> Option<FrequencyGrid> {
        if self.size * 2 > MAX_GRID_SIZE {
            return None;
        }
        FrequencyGrid::new(self.size * 2).ok()
    }

    /// Midpoint-rule value of `(1/2pi) * integral over [-pi, pi]` of the
    /// sampled integrand.
    pub fn mean(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.size, "sample count must match grid");
        pairwise_sum(values) / self.size as f64
    }

    /// Midpoint-rule value of the plain integral over `[-pi, pi]`.
    pub fn integral(&self, values: &[f64]) -> f64 {
        self.mean(values) * 2.0 * std::f64::consts::PI
    }
}

/// Numerically stable summation used for all grid reductions: pairwise
/// recursion keeps rounding growth logarithmic and the result independent of
/// thread count (reductions are always performed on fully materialized slices).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const CUTOFF: usize = 32;
    if values.len() <= CUTOFF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// A spectral density sampled on a [`FrequencyGrid`].
///
/// Values must be nonnegative and not NaN. `+inf` is permitted so the type can
/// also carry upper-bound envelopes for the density classes; operations that
/// need finiteness check it at the point of use.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::DomainError {
                what: format!(
                    "density has {} samples but grid has {} nodes",
                    values.len(),
                    grid.size()
                ),
            });
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::DomainError {
                what: format!("density values must be nonnegative, found {v}"),
            });
        }
        Ok(DensityGrid { grid, values })
    }

    /// Samples an analytic density at the grid nodes.
    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&l| f(l)).collect();
        DensityGrid::new(grid, values)
    }

    /// Constant density.
    pub fn constant(grid: FrequencyGrid, value: f64) -> Result<Self> {
        let n = grid.size();
        DensityGrid::new(grid, vec![value; n])
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// `(1/2pi) * integral of f`, the process power.
    pub fn power(&self) -> f64 {
        self.grid.mean(&self.values)
    }

    /// Writes `lambda,value` rows with full double precision.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 48);
        out.push_str("lambda,value\n");
        for (l, v) in self.grid.nodes().iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e}", l, v).expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a density written by [`DensityGrid::to_csv`]. The node column is
    /// checked against the reconstructed grid.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "lambda,value" => {}
            other => {
                return Err(Error::Io {
                    detail: format!("expected header 'lambda,value', found {:?}", other),
                })
            }
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let l: f64 = parse_field(parts.next(), i, path)?;
            let v: f64 = parse_field(parts.next(), i, path)?;
            nodes.push(l);
            values.push(v);
        }
        let grid = FrequencyGrid::new(values.len())?;
        for (j, (&have, &want)) in nodes.iter().zip(grid.nodes()).enumerate() {
            if (have - want).abs() > 1e-9 {
                return Err(Error::Io {
                    detail: format!(
                        "node {j} is {have}, expected midpoint {want}; file is not on a supported grid"
                    ),
                });
            }
        }
        DensityGrid::new(grid, values)
    }
}

fn parse_field(field: Option<&str>, row: usize, path: &Path) -> Result<f64> {
    let raw = field.ok_or_else(|| Error::Io {
        detail: format!("row {row} of {} is missing a column", path.display()),
    })?;
    let trimmed = raw.trim();
    match trimmed {
        "inf" | "+inf" => return Ok(f64::INFINITY),
        _ => {}
    }
    trimmed.parse().map_err(|e| Error::Io {
        detail: format!("row {row} of {}: {e}", path.display()),
    })
}
