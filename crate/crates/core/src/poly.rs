//! Dense polynomial / power-series arithmetic on real coefficient vectors.
//!
//! A slice `p` represents `p(z) = sum_k p[k] z^k`. Everything the crate needs
//! from polynomials is here: convolution, truncated series exponential and
//! inverse (the standard Newton-free recurrences), root finding through the
//! companion matrix, and construction of the minimum-phase version of a
//! polynomial by reflecting roots out of the unit disk.

use crate::error::{Error, Result};
use crate::MIN_PHASE_MARGIN;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Full linear convolution `a * b`.
pub fn conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Convolution truncated to the first `len` coefficients.
pub fn conv_trunc(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate() {
        if i >= len {
            break;
        }
        let jmax = (len - i).min(b.len());
        for j in 0..jmax {
            out[i + j] += x * b[j];
        }
    }
    out
}

/// `base^n` as a polynomial (exact convolution power).
pub fn pow_conv(base: &[f64], n: u32) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..n {
        out = conv(&out, base);
    }
    out
}

/// Truncated exponential of a power series: given `l` with
/// `l(z) = sum_{k>=0} l[k] z^k`, returns the first `len` coefficients of
/// `exp(l(z))` via the recurrence `k p(k) = sum_{j=1..k} j l(j) p(k-j)`.
pub fn series_exp(l: &[f64], len: usize) -> Vec<f64> {
    let mut p = vec![0.0; len];
    if len == 0 {
        return p;
    }
    p[0] = l.first().copied().unwrap_or(0.0).exp();
    for k in 1..len {
        let mut acc = 0.0;
        let jmax = k.min(l.len().saturating_sub(1));
        for j in 1..=jmax {
            acc += j as f64 * l[j] * p[k - j];
        }
        p[k] = acc / k as f64;
    }
    p
}

/// Truncated reciprocal of a power series with `p[0] != 0`.
pub fn series_inverse(p: &[f64], len: usize) -> Result<Vec<f64>> {
    let p0 = p.first().copied().unwrap_or(0.0);
    if p0 == 0.0 || !p0.is_finite() {
        return Err(Error::SingularFactor { min_modulus: p0.abs() });
    }
    let mut inv = vec![0.0; len];
    if len == 0 {
        return Ok(inv);
    }
    inv[0] = 1.0 / p0;
    for t in 1..len {
        let mut acc = 0.0;
        let jmax = t.min(p.len().saturating_sub(1));
        for j in 1..=jmax {
            acc += p[j] * inv[t - j];
        }
        inv[t] = -acc / p0;
    }
    Ok(inv)
}

/// Exact binomial coefficient as `f64` (arguments stay small enough that the
/// value is exactly representable).
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Index of the last coefficient that is significant relative to the largest
/// one; returns `None` for an (effectively) zero polynomial.
pub fn effective_degree(p: &[f64], rel_tol: f64) -> Option<usize> {
    let scale = p.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    p.iter().rposition(|&x| x.abs() > rel_tol * scale)
}

/// All complex roots of `p` via the companion matrix of the trimmed
/// polynomial. Degree-zero (or zero) polynomials yield no roots.
pub fn roots(p: &[f64]) -> Vec<Complex64> {
    let deg = match effective_degree(p, 1e-300) {
        Some(d) if d >= 1 => d,
        _ => return Vec::new(),
    };
    let lead = p[deg];
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -p[i] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Outcome of a minimum-phase test: where the smallest-modulus root sits.
#[derive(Debug, Clone, Copy)]
pub struct MinPhaseReport {
    /// Smallest root modulus (`f64::INFINITY` when there are no roots).
    pub min_root_modulus: f64,
    /// True when every root satisfies `|z| >= 1 - MIN_PHASE_MARGIN`.
    pub min_phase: bool,
}

/// Checks whether `p(z)` has all roots outside the open unit disk, allowing
/// roots on the circle itself (within [`MIN_PHASE_MARGIN`]).
pub fn min_phase_report(p: &[f64]) -> MinPhaseReport {
    let rs = roots(p);
    let min_mod = rs.iter().map(|r| r.norm()).fold(f64::INFINITY, f64::min);
    MinPhaseReport {
        min_root_modulus: min_mod,
        min_phase: min_mod >= 1.0 - MIN_PHASE_MARGIN,
    }
}

/// Minimum-phase polynomial with the same modulus on the unit circle as `p`:
/// roots strictly inside the disk are reflected to their conjugate inverses
/// and the constant term is made positive. Roots at the origin are dropped
/// (pure delays carry no modulus).
pub fn min_phase_version(p: &[f64]) -> Result<Vec<f64>> {
    let deg = effective_degree(p, 1e-300);
    let deg = match deg {
        None => {
            return Err(Error::NotFactorizable {
                reason: "zero polynomial has no spectral factor".into(),
            })
        }
        Some(0) => {
            return Ok(vec![p[0].abs()]);
        }
        Some(d) => d,
    };
    let lead = p[deg];
    let rs = roots(&p[..=deg]);
    let mut gamma = lead.abs();
    // Build the product over factors in complex arithmetic, then take the
    // real part (conjugate root pairs keep the result essentially real).
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in &rs {
        let modulus = r.norm();
        if modulus < 1e-12 {
            continue; // root at the origin: drop the delay factor
        }
        let factor = if modulus >= 1.0 {
            gamma *= modulus;
            // (1 - z / r) -> coefficients [1, -1/r]
            [Complex64::new(1.0, 0.0), -1.0 / r]
        } else {
            // reflect: (1 - conj(r) z)
            [Complex64::new(1.0, 0.0), -r.conj()]
        };
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c * factor[0];
            next[i + 1] += c * factor[1];
        }
        coeffs = next;
    }
    let scale_in: f64 = coeffs[0].norm();
    if scale_in == 0.0 {
        return Err(Error::NotFactorizable {
            reason: "degenerate root configuration".into(),
        });
    }
    let max_im = coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let max_re = coeffs.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    if max_im > 1e-8 * max_re.max(1e-300) {
        return Err(Error::NotFactorizable {
            reason: format!("root pairing failed (imaginary residue {:.2e})", max_im),
        });
    }
    // Normalize so the product is monic-in-constant, then apply gamma.
    let c0 = coeffs[0].re;
    Ok(coeffs.iter().map(|c| gamma * c.re / c0).collect())
}
