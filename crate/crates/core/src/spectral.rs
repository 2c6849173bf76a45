//! Increment kernel and minimum-phase spectral factorization.
//!
//! The central objects are the nonnegative kernel
//! `g(lambda) = |1 - e^{-i lambda mu}|^{2n} / lambda^{2n}` attached to an
//! increment specification `(n, mu)`, and minimum-phase factors of sampled
//! spectral densities: real causal coefficient sequences `phi` with
//! `|Phi(e^{-i lambda})|^2` reproducing the density at the grid nodes.
//!
//! Factorization runs on the band-limited interpolant of the samples: the
//! trigonometric polynomial of degree `G/2` that matches the samples exactly
//! at the midpoint nodes. Its minimum-phase factor has finite degree, so the
//! cepstrum (log, Fourier, exponential) of the interpolant evaluated on an
//! oversampled grid recovers coefficients whose reconstruction error at the
//! original nodes is limited only by truncation, not by quadrature aliasing.
//! For the kernel itself the seam discontinuity of `1/lambda^{2n}` is kept
//! out of the cepstrum entirely by splitting off the exact polynomial factor
//! `(1 + z + ... + z^{mu-1})^n` and factoring only the strictly positive
//! unit-step part.

use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::{DensityGrid, FrequencyGrid, GRID_SIZE_LIMIT};
use crate::poly;
use crate::{DEFAULT_FACTOR_TOL, DENSITY_FLOOR};

/// Oversampling applied to the interpolant before taking logs, so that the
/// log-series coefficients are effectively alias-free.
const FACTOR_OVERSAMPLE: usize = 8;

/// Fraction of grid nodes allowed below the density floor before the density
/// is declared non-factorizable.
const MAX_FLOORED_FRACTION: f64 = 0.10;

/// Increment order and step defining the kernel `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncrementSpec {
    order: u32,
    step: u32,
}

impl IncrementSpec {
    /// Builds a spec with increment order `n >= 1` and step `mu >= 1`.
    pub fn new(order: u32, step: u32) -> Result<Self> {
        if order < 1 || order > 32 {
            return Err(Error::DomainError {
                what: format!("increment order {order} must lie in [1, 32]"),
            });
        }
        if step < 1 || step > 65536 {
            return Err(Error::DomainError {
                what: format!("increment step {step} must lie in [1, 65536]"),
            });
        }
        Ok(IncrementSpec { order, step })
    }

    /// Same order with step 1.
    pub fn with_unit_step(&self) -> Self {
        IncrementSpec {
            order: self.order,
            step: 1,
        }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// Kernel value `g(lambda)`; at `lambda = 0` the removable-singularity
    /// limit `mu^{2n}`.
    pub fn kernel(&self, lambda: f64) -> f64 {
        let n = self.order as i32;
        let mu = self.step as f64;
        if lambda == 0.0 {
            return mu.powi(2 * n);
        }
        let base = 2.0 * (lambda * mu / 2.0).sin() / lambda;
        (base * base).powi(n)
    }

    /// Circle-metric distance from `lambda` to the nearest kernel zero
    /// `2 pi k / mu` (`k != 0`); infinite when the kernel has no zeros.
    pub fn kernel_zero_distance(&self, lambda: f64) -> f64 {
        let mu = self.step as u64;
        if mu == 1 {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        for k in 1..=mu / 2 {
            let zero = 2.0 * std::f64::consts::PI * k as f64 / mu as f64;
            best = best.min(circle_distance(lambda, zero));
            best = best.min(circle_distance(lambda, -zero));
        }
        best
    }

    /// Coefficients of `(1 + z + ... + z^{mu-1})^n`, the polynomial factor of
    /// the kernel that carries all of its unit-circle zeros.
    pub fn step_polynomial(&self) -> Vec<f64> {
        let ones = vec![1.0; self.step as usize];
        poly::pow_conv(&ones, self.order)
    }
}

/// Distance between two angles on the circle of circumference `2 pi`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

/// Unit-step kernel factor `G0(lambda) = (2 sin(lambda/2) / lambda)^2`,
/// strictly positive on `[-pi, pi]` with `G0(0) = 1`.
pub fn unit_step_kernel(lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let base = 2.0 * (lambda / 2.0).sin() / lambda;
    base * base
}

/// Minimum-phase factor of a sampled density: real causal coefficients with
/// positive leading term.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFactor {
    coeffs: Vec<f64>,
}

impl CanonicalFactor {
    /// Wraps a coefficient sequence; requires a finite, nonempty sequence
    /// with `coeffs[0] > 0`. Root locations are *not* checked here (see
    /// [`verify_factorization`]).
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::DomainError {
                what: "canonical factor needs at least one coefficient".into(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::DomainError {
                what: "canonical factor coefficients must be finite".into(),
            });
        }
        if coeffs[0] <= 0.0 {
            return Err(Error::DomainError {
                what: format!("canonical factor needs a positive leading coefficient, got {}", coeffs[0]),
            });
        }
        Ok(CanonicalFactor { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of stored coefficients (`max lag + 1`).
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Samples of `Phi(e^{-i lambda})` on a grid.
    pub fn eval(&self, grid: &FrequencyGrid) -> Vec<num_complex::Complex64> {
        fourier::eval_causal(&self.coeffs, grid)
    }

    /// Samples of `|Phi(e^{-i lambda})|^2` on a grid.
    pub fn modulus_sq(&self, grid: &FrequencyGrid) -> Vec<f64> {
        fourier::modulus_sq_causal(&self.coeffs, grid)
    }

    /// Zero-lag autocovariance `sum phi(k)^2` of the factored density.
    pub fn power(&self) -> f64 {
        crate::grid::pairwise_sum(&self.coeffs.iter().map(|c| c * c).collect::<Vec<_>>())
    }

    /// Factor of the density scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::DomainError {
                what: format!("scale factor must be positive and finite, got {c}"),
            });
        }
        let s = c.sqrt();
        CanonicalFactor::new(self.coeffs.iter().map(|v| v * s).collect())
    }

    /// Root-location report for the coefficient polynomial. Cost grows with
    /// the cube of the degree; intended for short factors.
    pub fn min_phase_report(&self) -> poly::MinPhaseReport {
        poly::min_phase_report(&self.coeffs)
    }
}

/// Outer factor of the increment kernel: `|W(e^{-i lambda})|^2 = g(lambda)`
/// at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterFactorW {
    spec: IncrementSpec,
    coeffs: Vec<f64>,
}

impl OuterFactorW {
    pub fn spec(&self) -> IncrementSpec {
        self.spec
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, grid: &FrequencyGrid) -> Vec<num_complex::Complex64> {
        fourier::eval_causal(&self.coeffs, grid)
    }
}

/// Diagnostics from a factorization run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationReport {
    /// Additive floor applied before taking logarithms.
    pub floor_value: f64,
    /// Fraction of input nodes at or below the floor.
    pub floored_fraction: f64,
    /// Smallest value of the band-limited interpolant on the oversampled
    /// grid (can be negative for densities with zeros).
    pub interpolant_min: f64,
    /// Largest relative reconstruction error over the checked nodes.
    pub max_rel_error: f64,
    /// Largest absolute reconstruction error over the checked nodes.
    pub max_abs_error: f64,
    /// Number of nodes entering the reconstruction check.
    pub checked_nodes: usize,
    /// Size of the grid the factor was built on (after any refinement).
    pub grid_size: usize,
}

struct InterpolantFactor {
    coeffs: Vec<f64>,
    interpolant_min: f64,
    floor_value: f64,
    floored_fraction: f64,
}

/// Minimum-phase factor of the band-limited interpolant of `samples`,
/// truncated to `len` coefficients.
fn interpolant_factor(samples: &[f64], grid: &FrequencyGrid, len: usize) -> Result<InterpolantFactor> {
    let g = grid.size();
    assert!(len >= 1 && 2 * len <= g, "factor length must satisfy 2*len <= grid size");
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return Err(Error::NotFactorizable {
            reason: format!("density maximum {max} is not a positive finite number"),
        });
    }
    let floor_value = DENSITY_FLOOR * max;
    let floored = samples.iter().filter(|&&v| v <= floor_value).count();
    let floored_fraction = floored as f64 / g as f64;
    if floored_fraction > MAX_FLOORED_FRACTION {
        return Err(Error::NotFactorizable {
            reason: format!(
                "density is at the zero floor on {:.1}% of grid nodes",
                100.0 * floored_fraction
            ),
        });
    }

    // Symmetric interpolant coefficients from the sample DFT: the real parts
    // give the trigonometric polynomial of degree G/2 matching the (even)
    // samples at every node, with the Nyquist term split evenly.
    let half = g / 2;
    let lags: Vec<i64> = (0..=half as i64).collect();
    let c = fourier::series_coefficients(samples, grid, &lags);
    let mut causal = vec![0.0; half + 1];
    causal[0] = c[0].re;
    for k in 1..half {
        causal[k] = 2.0 * c[k].re;
    }
    causal[half] = c[half].re;

    // Exact samples of the interpolant on an oversampled midpoint grid.
    let big_size = (FACTOR_OVERSAMPLE * g).min(GRID_SIZE_LIMIT).max(g);
    let big = FrequencyGrid::new(big_size)?;
    let interp: Vec<f64> = fourier::eval_causal(&causal, &big)
        .into_iter()
        .map(|z| z.re)
        .collect();
    let interpolant_min = interp.iter().cloned().fold(f64::INFINITY, f64::min);

    // Cepstrum: log-series coefficients up to lag len-1 drive the power
    // series exponential; higher lags cannot influence the truncated factor.
    let logs: Vec<f64> = interp.iter().map(|&t| t.max(floor_value).ln()).collect();
    let log_lags: Vec<i64> = (0..len as i64).collect();
    let mut l: Vec<f64> = fourier::series_coefficients(&logs, &big, &log_lags)
        .into_iter()
        .map(|z| z.re)
        .collect();
    l[0] *= 0.5;
    let coeffs = poly::series_exp(&l, len);
    Ok(InterpolantFactor {
        coeffs,
        interpolant_min,
        floor_value,
        floored_fraction,
    })
}

/// Reconstruction errors of `|poly(e^{-i lambda})|^2` against target samples
/// over the nodes selected by `keep`.
fn reconstruction_errors(
    coeffs: &[f64],
    target: &[f64],
    grid: &FrequencyGrid,
    keep: impl Fn(usize) -> bool,
) -> (f64, f64, usize) {
    let rec = fourier::modulus_sq_causal(coeffs, grid);
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut checked = 0usize;
    for j in 0..grid.size() {
        if !keep(j) {
            continue;
        }
        checked += 1;
        let err = (rec[j] - target[j]).abs();
        max_abs = max_abs.max(err);
        if target[j] > 0.0 {
            max_rel = max_rel.max(err / target[j]);
        }
    }
    (max_rel, max_abs, checked)
}

/// Minimum-phase factor of a sampled density, with diagnostics; reconstruction
/// is checked at the grid nodes (relative error, skipping floored nodes)
/// against `tol`.
pub fn canonical_factorization_with_report(
    f: &DensityGrid,
    len: usize,
    tol: f64,
) -> Result<(CanonicalFactor, FactorizationReport)> {
    let grid = f.grid();
    check_len(len, grid)?;
    let inner = interpolant_factor(f.values(), grid, len)?;
    let (max_rel, max_abs, checked) = reconstruction_errors(&inner.coeffs, f.values(), grid, |j| {
        f.values()[j] > inner.floor_value
    });
    let report = FactorizationReport {
        floor_value: inner.floor_value,
        floored_fraction: inner.floored_fraction,
        interpolant_min: inner.interpolant_min,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        checked_nodes: checked,
        grid_size: grid.size(),
    };
    if max_rel > tol {
        return Err(Error::ToleranceNotMet {
            what: "density factorization reconstruction".into(),
            achieved: max_rel,
            required: tol,
        });
    }
    let factor = CanonicalFactor::new(inner.coeffs)?;
    Ok((factor, report))
}

/// Minimum-phase factor of a sampled density at the default tolerance.
pub fn canonical_factorization(f: &DensityGrid, len: usize) -> Result<CanonicalFactor> {
    canonical_factorization_with_report(f, len, DEFAULT_FACTOR_TOL).map(|(factor, _)| factor)
}

fn check_len(len: usize, grid: &FrequencyGrid) -> Result<()> {
    if len < 1 {
        return Err(Error::DomainError {
            what: "factor length must be at least 1".into(),
        });
    }
    if 2 * len > grid.size() {
        return Err(Error::DomainError {
            what: format!(
                "factor length {len} too large for grid size {}; need 2*len <= G",
                grid.size()
            ),
        });
    }
    Ok(())
}

/// Outer factor of the increment kernel with diagnostics. The kernel's
/// unit-circle zeros are carried exactly by the polynomial
/// `(1 + z + ... + z^{mu-1})^n`; only the strictly positive unit-step part is
/// factored numerically, and the full product is kept within `len`
/// coefficients so the reconstruction error stays uniform in relative terms.
/// On tolerance failure the grid is refined (doubled) up to the refinement
/// ceiling before giving up.
pub fn outer_factor_w_with_report(
    spec: IncrementSpec,
    grid: &FrequencyGrid,
    len: usize,
    tol: f64,
) -> Result<(OuterFactorW, FactorizationReport)> {
    check_len(len, grid)?;
    let step_poly_extra = (spec.order() as usize) * (spec.step() as usize - 1);
    if len <= step_poly_extra {
        return Err(Error::DomainError {
            what: format!(
                "factor length {len} cannot hold the degree-{step_poly_extra} step polynomial"
            ),
        });
    }
    let mut current = grid.clone();
    let mut best: Option<(OuterFactorW, FactorizationReport)> = None;
    loop {
        let (w, report) = build_outer_factor(spec, &current, len)?;
        let better = best
            .as_ref()
            .map(|(_, b)| report.max_rel_error < b.max_rel_error)
            .unwrap_or(true);
        if better {
            best = Some((w, report));
        }
        if best.as_ref().map(|(_, b)| b.max_rel_error <= tol).unwrap_or(false) {
            let (w, report) = best.unwrap();
            return Ok((w, report));
        }
        match current.refined() {
            Some(next) => current = next,
            None => {
                let (_, report) = best.unwrap();
                return Err(Error::ToleranceNotMet {
                    what: "outer kernel factor reconstruction".into(),
                    achieved: report.max_rel_error,
                    required: tol,
                });
            }
        }
    }
}

fn build_outer_factor(
    spec: IncrementSpec,
    grid: &FrequencyGrid,
    len: usize,
) -> Result<(OuterFactorW, FactorizationReport)> {
    let n = spec.order();
    let step_poly = spec.step_polynomial();
    let inner_len = len - (step_poly.len() - 1);
    let unit_samples: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&l| unit_step_kernel(l).powi(n as i32))
        .collect();
    let inner = interpolant_factor(&unit_samples, grid, inner_len)?;
    let coeffs = poly::conv(&step_poly, &inner.coeffs);
    debug_assert_eq!(coeffs.len(), len);
    let kernel: Vec<f64> = grid.nodes().iter().map(|&l| spec.kernel(l)).collect();
    let skip_radius = grid.step();
    let (max_rel, max_abs, checked) = reconstruction_errors(&coeffs, &kernel, grid, |j| {
        spec.kernel_zero_distance(grid.node(j)) > skip_radius
    });
    let report = FactorizationReport {
        floor_value: inner.floor_value,
        floored_fraction: inner.floored_fraction,
        interpolant_min: inner.interpolant_min,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        checked_nodes: checked,
        grid_size: grid.size(),
    };
    Ok((OuterFactorW { spec, coeffs }, report))
}

/// Outer factor of the increment kernel at the default tolerance.
pub fn outer_factor_w(spec: IncrementSpec, grid: &FrequencyGrid, len: usize) -> Result<OuterFactorW> {
    outer_factor_w_with_report(spec, grid, len, DEFAULT_FACTOR_TOL).map(|(w, _)| w)
}

/// Outer factor at the longest length the grid supports (`G/2`), where the
/// reconstruction is most accurate.
pub fn outer_factor_full(spec: IncrementSpec, grid: &FrequencyGrid) -> Result<OuterFactorW> {
    outer_factor_w(spec, grid, grid.size() / 2)
}

/// Minimum-phase factor of `g * f` with diagnostics. The kernel zeros are
/// again carried by the exact step polynomial; the numerical factorization
/// sees only `G0^n * f`, which is strictly positive wherever `f` is. The
/// reconstruction check compares `|Phi_mu|^2` to `g * f`, skipping nodes
/// within one grid step of a kernel zero and floored nodes.
pub fn increment_density_factor_with_report(
    f: &DensityGrid,
    spec: IncrementSpec,
    len: usize,
    tol: f64,
) -> Result<(CanonicalFactor, FactorizationReport)> {
    let grid = f.grid();
    check_len(len, grid)?;
    let step_poly = spec.step_polynomial();
    if len <= step_poly.len() - 1 {
        return Err(Error::DomainError {
            what: format!(
                "factor length {len} cannot hold the degree-{} step polynomial",
                step_poly.len() - 1
            ),
        });
    }
    let n = spec.order();
    let smooth: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&l, &v)| unit_step_kernel(l).powi(n as i32) * v)
        .collect();
    let inner_len = len - (step_poly.len() - 1);
    let inner = interpolant_factor(&smooth, grid, inner_len)?;
    let coeffs = poly::conv(&step_poly, &inner.coeffs);
    let target: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&l, &v)| spec.kernel(l) * v)
        .collect();
    let skip_radius = grid.step();
    let (max_rel, max_abs, checked) = reconstruction_errors(&coeffs, &target, grid, |j| {
        spec.kernel_zero_distance(grid.node(j)) > skip_radius && smooth[j] > inner.floor_value
    });
    let report = FactorizationReport {
        floor_value: inner.floor_value,
        floored_fraction: inner.floored_fraction,
        interpolant_min: inner.interpolant_min,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        checked_nodes: checked,
        grid_size: grid.size(),
    };
    if max_rel > tol {
        return Err(Error::ToleranceNotMet {
            what: "increment density factorization reconstruction".into(),
            achieved: max_rel,
            required: tol,
        });
    }
    Ok((CanonicalFactor::new(coeffs)?, report))
}

/// Minimum-phase factor of `g * f` at the default tolerance.
pub fn increment_density_factor(
    f: &DensityGrid,
    spec: IncrementSpec,
    len: usize,
) -> Result<CanonicalFactor> {
    increment_density_factor_with_report(f, spec, len, DEFAULT_FACTOR_TOL).map(|(p, _)| p)
}

/// Result of checking a claimed factorization against a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorCheck {
    /// `max_j | |Phi(e^{-i lambda_j})|^2 - f(lambda_j) |` over all nodes.
    pub max_abs_error: f64,
    /// Same maximum in relative terms over nodes with `f > 0`.
    pub max_rel_error: f64,
    /// Whether all coefficient-polynomial roots stay out of the open unit
    /// disk (within the module margin).
    pub min_phase: bool,
    /// Smallest root modulus found (infinite for constants).
    pub min_root_modulus: f64,
}

/// Checks `|Phi|^2` against a density on its grid and reports the root
/// locations of the factor polynomial. Root finding costs the cube of the
/// degree; intended for short factors.
pub fn verify_factorization(phi: &CanonicalFactor, f: &DensityGrid) -> FactorCheck {
    let (max_rel, max_abs, _) =
        reconstruction_errors(phi.coeffs(), f.values(), f.grid(), |_| true);
    let report = phi.min_phase_report();
    FactorCheck {
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        min_phase: report.min_phase,
        min_root_modulus: report.min_root_modulus,
    }
}

/// Density `g * f` sampled on the grid of `f`.
pub fn increment_density(f: &DensityGrid, spec: IncrementSpec) -> DensityGrid {
    let values: Vec<f64> = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&l, &v)| spec.kernel(l) * v)
        .collect();
    DensityGrid::new(f.grid().clone(), values).expect("kernel-weighted density stays valid")
}

/// Spectral density of an integrated first-order moving average: the raw
/// sequence has unit-step first increments with density `|1 + theta
/// e^{-i lambda}|^2`, so the sequence density is that polynomial divided by
/// the unit-step kernel factor.
pub fn integrated_ma1_density(grid: &FrequencyGrid, theta: f64) -> Result<DensityGrid> {
    if !(theta.abs() < 1.0) {
        return Err(Error::DomainError {
            what: format!("moving-average coefficient {theta} must satisfy |theta| < 1"),
        });
    }
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&l| {
            let c = (1.0 + theta * l.cos()).powi(2) + (theta * l.sin()).powi(2);
            c / unit_step_kernel(l)
        })
        .collect();
    DensityGrid::new(grid.clone(), values)
}
