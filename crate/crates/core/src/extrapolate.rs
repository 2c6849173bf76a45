//! Optimal linear extrapolation under a known spectral density.
//!
//! Targets come in four flavours, all estimated from observations of the raw
//! sequence at times -1, -2, ...:
//!
//! - a functional of future *increment* values with coefficients `b`,
//! - a functional of future *raw* values with coefficients `a` (infinite or
//!   finite window),
//! - a single future increment at offset `m >= 0`,
//! - a single future raw value at offset `m` when `m < step` (every shifted
//!   value `xi(m - l*step)` is then already observed).
//!
//! Each estimate is summarised by a [`SpectralCharacteristic`] (the frequency
//! response of the estimator against the increment spectral measure), the
//! mean-square error, and a time-domain realization: total weights on the
//! observed values plus, where applicable, the deterministic boundary
//! component that re-expresses increment estimates in raw values.
//!
//! Conventions:
//! - `past_weights` are the *total* weights on `xi(k)`, `k <= -1`, with the
//!   boundary component already merged in; applying them to data realizes the
//!   estimate. `boundary_weights` lists that component separately for
//!   inspection and must not be added on top.
//! - The singular part of the sequence is taken to be zero throughout: the
//!   scope is regular sequences.
//! - The increment kernel is never evaluated as a complex function; all
//!   quantities are computed from coefficient identities or the nonnegative
//!   kernel modulus.

use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::{pairwise_sum, DensityGrid, FrequencyGrid};
use crate::increments::{self, FunctionalCoefficients};
use crate::poly;
use crate::spectral::{increment_density_factor, CanonicalFactor, IncrementSpec};
use crate::{DEFAULT_FILTER_HORIZON, WEIGHT_CLAMP};
use num_complex::Complex64;

/// Relative floor on `|Phi(e^{-i lambda_j})|` below which the factor is
/// treated as numerically singular on the grid.
const FACTOR_NODE_FLOOR: f64 = 1e-13;

/// Absolute-ish tolerance for the filter inversion self-check: the weights
/// are reconstructed back into the one-sided coefficients they came from and
/// must match to this accuracy (scaled by the coefficient magnitude).
const INVERSION_RESIDUAL_TOL: f64 = 1e-8;

/// Threshold on the extrapolated weight tail energy above which the
/// realization is flagged as not converged at the chosen horizon.
const TAIL_ENERGY_WARN: f64 = 1e-10;

/// Which estimation target produced a characteristic. Value targets carry
/// the data needed to re-express the increment-domain estimate in raw
/// values.
#[derive(Debug, Clone, PartialEq)]
pub enum CharacteristicSource {
    /// Functional of future increments; realized directly on past increments.
    IncrementFunctional,
    /// Functional of future raw values; `v` holds the boundary coefficients
    /// on the observed window (index `i` corresponds to lag `-(i+1)`).
    ValueFunctional { v: Vec<f64> },
    /// Single future increment at the given offset.
    SingleIncrement { target: usize },
    /// Single future raw value at offset `target` (below the step), whose
    /// boundary component is the binomial recombination of observed values.
    SingleValue { target: usize },
}

/// Frequency response of an optimal estimate with the coefficient data that
/// produced it: `h(lambda) = T(e^{i lambda}) - r(e^{i lambda}) / Phi(e^{-i
/// lambda})`, where `T` is the transfer polynomial of the target and `r` the
/// one-sided projection coefficients.
#[derive(Debug, Clone)]
pub struct SpectralCharacteristic {
    grid: FrequencyGrid,
    samples: Vec<Complex64>,
    r: Vec<f64>,
    transfer: Vec<f64>,
    source: CharacteristicSource,
}

impl SpectralCharacteristic {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// `h(lambda_j)` on the grid nodes.
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Projection coefficients: `r(e^{i lambda}) = sum_j r[j] e^{i lambda j}`.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// Transfer polynomial of the target: `T(e^{i lambda}) = sum_k t[k]
    /// e^{i lambda k}` (the increment-functional coefficients).
    pub fn transfer(&self) -> &[f64] {
        &self.transfer
    }

    pub fn source(&self) -> &CharacteristicSource {
        &self.source
    }

    /// Causality self-check: the product `h(lambda) Phi(e^{-i lambda})` must
    /// have vanishing coefficients on `e^{i lambda k}` for `k = 0..=max_lag`.
    /// Returns the largest offending modulus.
    pub fn causality_residual(&self, phi: &CanonicalFactor, max_lag: usize) -> f64 {
        let phi_nodes = phi.eval(&self.grid);
        let prod: Vec<Complex64> = self
            .samples
            .iter()
            .zip(phi_nodes.iter())
            .map(|(h, p)| h * p)
            .collect();
        // the coefficient on e^{+i lambda k} is the Fourier coefficient at
        // lag +k
        let lags: Vec<i64> = (0..=max_lag as i64).collect();
        fourier::series_coefficients_complex(&prod, &self.grid, &lags)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Write the samples as CSV rows `lambda,re,im`.
    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("lambda,re,im\n");
        for (l, z) in self.grid.nodes().iter().zip(self.samples.iter()) {
            out.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", l, z.re, z.im));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Complete description of one optimal estimate.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    characteristic: SpectralCharacteristic,
    mse: f64,
    boundary_weights: Vec<(i64, f64)>,
    past_weights: Vec<(i64, f64)>,
    weight_tail_energy: f64,
    weight_convergence_warning: bool,
}

impl EstimateResult {
    pub fn characteristic(&self) -> &SpectralCharacteristic {
        &self.characteristic
    }

    /// Mean-square error of the estimate.
    pub fn mse(&self) -> f64 {
        self.mse
    }

    /// Deterministic boundary component `(lag, weight)`; already contained in
    /// [`EstimateResult::past_weights`].
    pub fn boundary_weights(&self) -> &[(i64, f64)] {
        &self.boundary_weights
    }

    /// Total weights on the observed values `(lag, weight)`, lag `-1` first.
    pub fn past_weights(&self) -> &[(i64, f64)] {
        &self.past_weights
    }

    /// Estimated energy of the weight tail beyond the horizon.
    pub fn weight_tail_energy(&self) -> f64 {
        self.weight_tail_energy
    }

    /// True when the weight tail could not be certified small at the horizon.
    pub fn weight_convergence_warning(&self) -> bool {
        self.weight_convergence_warning
    }

    /// JSON summary; the characteristic itself is referenced by the CSV path
    /// the caller intends to write it to.
    pub fn to_json(&self, characteristic_csv_path: &str) -> serde_json::Value {
        let pairs = |w: &[(i64, f64)]| {
            w.iter()
                .map(|(lag, wgt)| serde_json::json!({"lag": lag, "w": wgt}))
                .collect::<Vec<_>>()
        };
        serde_json::json!({
            "mse": self.mse,
            "boundary_weights": pairs(&self.boundary_weights),
            "past_weights": pairs(&self.past_weights),
            "characteristic_csv_path": characteristic_csv_path,
            "weight_tail_energy": self.weight_tail_energy,
            "weight_convergence_warning": self.weight_convergence_warning,
        })
    }
}

/// Time-domain realization of a characteristic: total weights on observed
/// values, the boundary component, and truncation diagnostics.
#[derive(Debug, Clone)]
pub struct PastWeights {
    weights: Vec<(i64, f64)>,
    boundary: Vec<(i64, f64)>,
    tail_energy: f64,
    converged: bool,
}

impl PastWeights {
    /// Total weights `(lag, weight)` for lags `-1` down to the horizon.
    pub fn weights(&self) -> &[(i64, f64)] {
        &self.weights
    }

    /// Boundary component `(lag, weight)`; already merged into `weights`.
    pub fn boundary(&self) -> &[(i64, f64)] {
        &self.boundary
    }

    /// Geometric extrapolation of the weight energy beyond the horizon.
    pub fn tail_energy(&self) -> f64 {
        self.tail_energy
    }

    /// False when the tail estimate exceeds the warning threshold or the
    /// weights do not decay geometrically at the horizon.
    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// `r[j] = sum_m t[m + j] phi[m]`: one-sided projection coefficients of the
/// transfer polynomial `t` against the factor coefficients.
fn correlate(t: &[f64], phi: &[f64]) -> Vec<f64> {
    (0..t.len())
        .map(|j| {
            let m_max = (t.len() - j).min(phi.len());
            (0..m_max).map(|m| t[m + j] * phi[m]).sum()
        })
        .collect()
}

fn assemble_characteristic(
    transfer: Vec<f64>,
    r: Vec<f64>,
    phi: &CanonicalFactor,
    grid: &FrequencyGrid,
    source: CharacteristicSource,
) -> Result<SpectralCharacteristic> {
    let phi_nodes = phi.eval(grid);
    let max_mod = phi_nodes.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    let min_mod = phi_nodes
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if !(min_mod > FACTOR_NODE_FLOOR * max_mod) {
        return Err(Error::SingularFactor {
            min_modulus: min_mod,
        });
    }
    let t_eval = fourier::eval_anticausal(&transfer, grid);
    let r_eval = fourier::eval_anticausal(&r, grid);
    let samples: Vec<Complex64> = t_eval
        .iter()
        .zip(r_eval.iter())
        .zip(phi_nodes.iter())
        .map(|((t, r), p)| t - r / p)
        .collect();
    Ok(SpectralCharacteristic {
        grid: grid.clone(),
        samples,
        r,
        transfer,
        source,
    })
}

/// Characteristic of the optimal estimate of an increment functional with
/// coefficients `b`: `h = B(e^{i lambda}) - r(e^{i lambda}) Phi^{-1}(e^{-i
/// lambda})` with `r = correlate(b, phi)`.
pub fn characteristic_b(
    b: &[f64],
    phi: &CanonicalFactor,
    grid: &FrequencyGrid,
) -> Result<SpectralCharacteristic> {
    if b.is_empty() || b.iter().any(|x| !x.is_finite()) {
        return Err(Error::DomainError {
            what: "increment functional coefficients must be nonempty and finite".into(),
        });
    }
    let r = correlate(b, phi.coeffs());
    assemble_characteristic(
        b.to_vec(),
        r,
        phi,
        grid,
        CharacteristicSource::IncrementFunctional,
    )
}

/// Mean-square error of the optimal increment-functional estimate: the
/// squared norm of the projection coefficients.
pub fn mse_b(b: &[f64], phi: &CanonicalFactor) -> f64 {
    let r = correlate(b, phi.coeffs());
    let sq: Vec<f64> = r.iter().map(|x| x * x).collect();
    pairwise_sum(&sq)
}

/// Time-domain realization of a characteristic as weights on the observed
/// values `xi(k)`, `k = -1..-horizon` (extended to the boundary reach when
/// the boundary extends deeper).
///
/// The one-sided coefficients on past increments are exact —
/// `c(k) = sum_t iota(t) gamma(k + t)` with `iota` the reciprocal factor
/// series and `gamma` the anticausal coefficients of `T(e^{i lambda})
/// Phi(e^{-i lambda}) - r(e^{i lambda})` — and are folded into raw-value
/// weights through the binomial expansion of the increment. Only the horizon
/// truncates; the tail energy of the truncated weights is estimated by
/// geometric extrapolation.
pub fn filter_weights(
    h: &SpectralCharacteristic,
    phi: &CanonicalFactor,
    spec: IncrementSpec,
    horizon: usize,
) -> Result<PastWeights> {
    if horizon == 0 {
        return Err(Error::DomainError {
            what: "filter horizon must be positive".into(),
        });
    }
    let n = spec.order() as usize;
    let mu = spec.step() as usize;
    let phic = phi.coeffs();
    let lphi = phic.len();

    // reach deep enough for the boundary component
    let depth = match &h.source {
        CharacteristicSource::ValueFunctional { v } => horizon.max(v.len()),
        CharacteristicSource::SingleValue { .. } => horizon.max(mu * n),
        _ => horizon,
    };

    // gamma[i] = coefficient on e^{-i lambda (i+1)} of T Phi - r
    let gamma_len = lphi.saturating_sub(1);
    let mut gamma = vec![0.0; gamma_len];
    for (i, g) in gamma.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (s, t) in h.transfer.iter().enumerate() {
            let idx = s + i + 1;
            if idx >= lphi {
                break;
            }
            acc += t * phic[idx];
        }
        *g = acc;
    }

    // one-sided increment weights: cb[i] is the weight on the increment at
    // lag -(i+1)
    let iota = poly::series_inverse(phic, depth)?;
    let cb = if gamma.is_empty() {
        vec![0.0; depth]
    } else {
        poly::conv_trunc(&iota, &gamma, depth)
    };

    // inversion self-check: convolving the weights back with the factor must
    // reproduce gamma wherever the windows fully overlap
    let gamma_scale = gamma.iter().map(|x| x.abs()).fold(1.0_f64, f64::max);
    let mut resid = 0.0_f64;
    for (j, g) in gamma.iter().enumerate().take(gamma_len.min(depth)) {
        let mut back = 0.0;
        for (u, c) in cb.iter().enumerate().take(j + 1) {
            if j - u < lphi {
                back += c * phic[j - u];
            }
        }
        resid = resid.max((back - g).abs());
    }
    if resid > INVERSION_RESIDUAL_TOL * gamma_scale {
        return Err(Error::ToleranceNotMet {
            what: "filter weight inversion residual".into(),
            achieved: resid,
            required: INVERSION_RESIDUAL_TOL * gamma_scale,
        });
    }

    // fold the increment weights into raw-value weights
    let mut w = vec![0.0_f64; depth];
    for (i, wi) in w.iter_mut().enumerate() {
        let s = i + 1;
        let mut acc = 0.0;
        for l in 0..=n {
            let off = l * mu;
            if off < s {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * poly::binomial(n as u32, l as u32) * cb[s - off - 1];
            }
        }
        *wi = acc;
    }

    // boundary component in raw values
    let mut boundary: Vec<(i64, f64)> = Vec::new();
    match &h.source {
        CharacteristicSource::ValueFunctional { v } => {
            for (i, &vi) in v.iter().enumerate() {
                let wgt = -vi;
                boundary.push((-(i as i64) - 1, wgt));
                w[i] += wgt;
            }
        }
        CharacteristicSource::SingleValue { target } => {
            for l in 1..=n {
                let lag = *target as i64 - (l * mu) as i64;
                let sign = if l % 2 == 0 { -1.0 } else { 1.0 };
                let wgt = sign * poly::binomial(n as u32, l as u32);
                boundary.push((lag, wgt));
                w[(-lag - 1) as usize] += wgt;
            }
        }
        _ => {}
    }

    for x in w.iter_mut() {
        if x.abs() < WEIGHT_CLAMP {
            *x = 0.0;
        }
    }

    // geometric tail estimate over the trailing half of the horizon
    let quarter = horizon / 4;
    let (tail_energy, geometric) = if quarter == 0 {
        (0.0, true)
    } else {
        let e1: f64 = w[horizon - 2 * quarter..horizon - quarter]
            .iter()
            .map(|x| x * x)
            .sum();
        let e2: f64 = w[horizon - quarter..horizon].iter().map(|x| x * x).sum();
        if e2 == 0.0 {
            (0.0, true)
        } else if e1 <= e2 {
            (e2, false)
        } else {
            let q = e2 / e1;
            (e2 * q / (1.0 - q), true)
        }
    };
    let converged = geometric && tail_energy <= TAIL_ENERGY_WARN;

    let weights: Vec<(i64, f64)> = w
        .iter()
        .enumerate()
        .map(|(i, &x)| (-(i as i64) - 1, x))
        .collect();
    boundary.sort_by_key(|(lag, _)| -lag);

    Ok(PastWeights {
        weights,
        boundary,
        tail_energy,
        converged,
    })
}

fn assemble_estimate(
    characteristic: SpectralCharacteristic,
    phi: &CanonicalFactor,
    spec: IncrementSpec,
) -> Result<EstimateResult> {
    let fw = filter_weights(&characteristic, phi, spec, DEFAULT_FILTER_HORIZON)?;
    let sq: Vec<f64> = characteristic.r.iter().map(|x| x * x).collect();
    let mse = pairwise_sum(&sq);
    Ok(EstimateResult {
        characteristic,
        mse,
        boundary_weights: fw.boundary,
        past_weights: fw.weights,
        weight_tail_energy: fw.tail_energy,
        weight_convergence_warning: !fw.converged,
    })
}

/// Optimal estimate of the single increment at offset `m >= 0` from past
/// observations. The mean-square error is the partial energy of the factor:
/// `sum_{k <= m} phi(k)^2`.
pub fn predict_increment(
    m: usize,
    spec: IncrementSpec,
    phi: &CanonicalFactor,
    grid: &FrequencyGrid,
) -> Result<EstimateResult> {
    let mut b = vec![0.0; m + 1];
    b[m] = 1.0;
    let r = correlate(&b, phi.coeffs());
    let characteristic = assemble_characteristic(
        b,
        r,
        phi,
        grid,
        CharacteristicSource::SingleIncrement { target: m },
    )?;
    assemble_estimate(characteristic, phi, spec)
}

/// Optimal estimate of the single raw value at offset `m` when `m < step`:
/// the binomial recombination of observed values plus the increment
/// prediction. Mean-square error equals that of the increment prediction.
pub fn predict_value(
    m: usize,
    spec: IncrementSpec,
    phi: &CanonicalFactor,
    grid: &FrequencyGrid,
) -> Result<EstimateResult> {
    if m >= spec.step() as usize {
        return Err(Error::DomainError {
            what: format!(
                "value prediction needs offset below the step: {} >= {}",
                m,
                spec.step()
            ),
        });
    }
    let mut b = vec![0.0; m + 1];
    b[m] = 1.0;
    let r = correlate(&b, phi.coeffs());
    let characteristic = assemble_characteristic(
        b,
        r,
        phi,
        grid,
        CharacteristicSource::SingleValue { target: m },
    )?;
    assemble_estimate(characteristic, phi, spec)
}

/// Optimal estimate of the value functional with coefficients `a` over the
/// full future, under density `f`.
pub fn estimate_functional_a(
    a: &FunctionalCoefficients,
    f: &DensityGrid,
    spec: IncrementSpec,
) -> Result<EstimateResult> {
    let phi = increment_density_factor(f, spec, f.grid().size() / 2)?;
    estimate_functional_a_with_factor(a, f.grid(), spec, &phi)
}

/// Same estimate with the increment factor of `g * f` supplied by the
/// caller. Exact synthetic factors (polynomial or rational densities) avoid
/// re-deriving one from grid samples.
pub fn estimate_functional_a_with_factor(
    a: &FunctionalCoefficients,
    grid: &FrequencyGrid,
    spec: IncrementSpec,
    phi: &CanonicalFactor,
) -> Result<EstimateResult> {
    let characteristic = characteristic_functional_a_with_factor(a, grid, spec, phi)?;
    assemble_estimate(characteristic, phi, spec)
}

/// Characteristic of the optimal value-functional estimate under a supplied
/// increment factor, without realizing the time-domain weights (whose
/// horizon truncation can be refused for factors with near-circle roots).
pub fn characteristic_functional_a_with_factor(
    a: &FunctionalCoefficients,
    grid: &FrequencyGrid,
    spec: IncrementSpec,
    phi: &CanonicalFactor,
) -> Result<SpectralCharacteristic> {
    let weights = increments::increment_weights(a, spec, a.coeffs().len())?;
    let b = weights.b().to_vec();
    let r = correlate(&b, phi.coeffs());
    assemble_characteristic(
        b,
        r,
        phi,
        grid,
        CharacteristicSource::ValueFunctional {
            v: weights.v().to_vec(),
        },
    )
}

/// Optimal estimate of the value functional restricted to offsets `0..=n_cap`.
pub fn estimate_functional_a_n(
    a: &FunctionalCoefficients,
    f: &DensityGrid,
    spec: IncrementSpec,
    n_cap: usize,
) -> Result<EstimateResult> {
    let phi = increment_density_factor(f, spec, f.grid().size() / 2)?;
    estimate_functional_a_n_with_factor(a, f.grid(), spec, n_cap, &phi)
}

/// Same windowed estimate with the increment factor of `g * f` supplied by
/// the caller.
pub fn estimate_functional_a_n_with_factor(
    a: &FunctionalCoefficients,
    grid: &FrequencyGrid,
    spec: IncrementSpec,
    n_cap: usize,
    phi: &CanonicalFactor,
) -> Result<EstimateResult> {
    let characteristic = characteristic_functional_a_n_with_factor(a, grid, spec, n_cap, phi)?;
    assemble_estimate(characteristic, phi, spec)
}

/// Characteristic of the windowed value-functional estimate under a supplied
/// increment factor, without realizing the time-domain weights.
pub fn characteristic_functional_a_n_with_factor(
    a: &FunctionalCoefficients,
    grid: &FrequencyGrid,
    spec: IncrementSpec,
    n_cap: usize,
    phi: &CanonicalFactor,
) -> Result<SpectralCharacteristic> {
    let np1 = n_cap + 1;
    let mut a_n = a.coeffs().to_vec();
    a_n.resize(np1, 0.0);
    a_n.truncate(np1);
    let d = increments::d_mu_coeffs(spec, np1);
    let b_n: Vec<f64> = (0..np1)
        .map(|k| (k..np1).map(|m| a_n[m] * d[m - k]).sum())
        .collect();
    let v = increments::v_n_from_b(&b_n, spec, n_cap);

    let mut phi_n = phi.coeffs().to_vec();
    phi_n.resize(np1, 0.0);
    phi_n.truncate(np1);

    // projection coefficients through the structured matrices, checked
    // against the direct correlation form
    let a_fc = FunctionalCoefficients::finite(a_n)?;
    let r_mat = increments::build_d_n(spec, n_cap)
        .apply(&increments::build_a_n(&a_fc, n_cap).apply(&phi_n));
    let r_corr = correlate(&b_n, &phi_n);
    debug_assert!(
        r_mat
            .iter()
            .zip(r_corr.iter())
            .all(|(x, y)| (x - y).abs() <= 1e-10 * (1.0 + x.abs())),
        "matrix and correlation projection routes disagree"
    );

    assemble_characteristic(
        b_n,
        r_mat,
        phi,
        grid,
        CharacteristicSource::ValueFunctional { v },
    )
}
