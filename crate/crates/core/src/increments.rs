//! Coefficient sequences and structured matrices connecting a linear
//! functional of raw sequence values to the same functional expressed over
//! stationary increments.
//!
//! For an increment specification `(n, mu)` the expansion
//! `(1 - z^mu)^{-n} = sum_k d(k) z^k` produces the nonnegative weights `d`;
//! a functional with weights `a` over raw values becomes a functional with
//! weights `b(k) = sum_{m >= k} a(m) d(m - k)` over increments, plus boundary
//! weights `v(k)` at the `mu * n` lags just before the observation window.
//! The same maps in matrix form: `D` (upper-triangular Toeplitz in `d`),
//! `W` (lower-triangular Toeplitz in the outer kernel factor), the Hankel
//! matrices `A` and `B`, and the row-reversed variant of `D` used by the
//! finite-window extremal problem.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::poly;
use crate::spectral::{outer_factor_full, IncrementSpec};

/// Largest fraction of `sum |b(k)|` the trailing half-window may carry before
/// the convergence proxy is declared violated (infinite functionals only).
const CAUCHY_TAIL_FRACTION: f64 = 0.25;

/// Largest neglected-tail contribution (from a truncated infinite `a`)
/// tolerated in the increment weights.
const TAIL_CONTRIBUTION_TOL: f64 = 1e-8;

/// How a weight sequence should be interpreted beyond its stored support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalKind {
    /// The stored coefficients are the whole functional.
    Finite,
    /// The stored coefficients truncate an infinite sequence whose tail is
    /// declared to satisfy `|a(m)| <= tail_constant * tail_ratio^m` for all
    /// `m` past the stored support.
    TruncatedInfinite { tail_ratio: f64, tail_constant: f64 },
}

/// Weights `a(0..K)` of a linear functional over raw sequence values.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalCoefficients {
    coeffs: Vec<f64>,
    kind: FunctionalKind,
}

impl FunctionalCoefficients {
    /// A functional supported exactly on the given coefficients.
    pub fn finite(coeffs: Vec<f64>) -> Result<Self> {
        Self::validate(&coeffs)?;
        Ok(FunctionalCoefficients {
            coeffs,
            kind: FunctionalKind::Finite,
        })
    }

    /// A truncated infinite functional with a declared geometric tail bound.
    pub fn truncated_infinite(coeffs: Vec<f64>, tail_ratio: f64, tail_constant: f64) -> Result<Self> {
        Self::validate(&coeffs)?;
        if !(tail_ratio > 0.0 && tail_ratio < 1.0) {
            return Err(Error::DomainError {
                what: format!("tail ratio {tail_ratio} must lie in (0, 1)"),
            });
        }
        if !(tail_constant >= 0.0 && tail_constant.is_finite()) {
            return Err(Error::DomainError {
                what: format!("tail constant {tail_constant} must be a nonnegative finite number"),
            });
        }
        Ok(FunctionalCoefficients {
            coeffs,
            kind: FunctionalKind::TruncatedInfinite { tail_ratio, tail_constant },
        })
    }

    fn validate(coeffs: &[f64]) -> Result<()> {
        if coeffs.is_empty() {
            return Err(Error::DomainError {
                what: "functional needs at least one coefficient".into(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::DomainError {
                what: "functional coefficients must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn kind(&self) -> FunctionalKind {
        self.kind
    }

    /// Index of the last stored coefficient.
    pub fn max_index(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Reads `k,a` rows (with header) into a finite functional; missing
    /// indices are zero-filled.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with('k')) {
                continue;
            }
            let mut parts = line.split(',');
            let bad = || Error::Io {
                detail: format!("bad functional row {:?} at line {}", line, line_no + 1),
            };
            let k: usize = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let a: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            entries.push((k, a));
        }
        if entries.is_empty() {
            return Err(Error::Io {
                detail: "functional CSV holds no rows".into(),
            });
        }
        let max_k = entries.iter().map(|&(k, _)| k).max().unwrap();
        let mut coeffs = vec![0.0; max_k + 1];
        for (k, a) in entries {
            coeffs[k] = a;
        }
        FunctionalCoefficients::finite(coeffs)
    }

    /// Writes `k,a` rows.
    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("k,a\n");
        for (k, a) in self.coeffs.iter().enumerate() {
            out.push_str(&format!("{k},{a:.17e}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Expansion weights `d(0..len-1)` of `(1 - z^mu)^{-n}`: `d(k)` counts the
/// ordered ways to write `k` as a sum of `n` nonnegative multiples of `mu`.
pub fn d_mu_coeffs(spec: IncrementSpec, len: usize) -> Vec<f64> {
    let n = spec.order();
    let mu = spec.step() as usize;
    (0..len)
        .map(|k| {
            if k % mu != 0 {
                0.0
            } else {
                poly::binomial((k / mu) as u32 + n - 1, n - 1)
            }
        })
        .collect()
}

/// Increment weights derived from a functional: `b` over increments and the
/// boundary weights `v` at lags `-1 .. -mu*n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementWeights {
    b: Vec<f64>,
    v: Vec<f64>,
    diagnostics: WeightDiagnostics,
}

impl IncrementWeights {
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Boundary weight at lag `lag` (must lie in `-mu*n ..= -1`).
    pub fn v_at(&self, lag: i64) -> f64 {
        assert!(lag < 0 && (-lag as usize) <= self.v.len(), "lag {lag} outside boundary range");
        self.v[(-lag - 1) as usize]
    }

    /// Boundary weights ordered by lag `-1, -2, ..., -mu*n`.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn diagnostics(&self) -> &WeightDiagnostics {
        &self.diagnostics
    }
}

/// Convergence proxies for the increment weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDiagnostics {
    /// `sum |b(k)|` over the computed window.
    pub abs_sum: f64,
    /// Fraction of `abs_sum` carried by the trailing half-window.
    pub abs_tail_fraction: f64,
    /// `sum (k+1) b(k)^2` over the computed window.
    pub weighted_sum: f64,
    /// Fraction of `weighted_sum` carried by the trailing half-window.
    pub weighted_tail_fraction: f64,
    /// Bound on the contribution of the functional's declared tail to any
    /// single `b(k)`.
    pub neglected_tail: f64,
}

/// `b(k) = sum_{m >= k} a(m) d(m - k)` for `k = 0..len-1`.
///
/// For truncated infinite functionals the declared tail bound is propagated:
/// the neglected contribution must stay below the module tolerance and the
/// partial sums of `sum |b(k)|` must look convergent (trailing half-window
/// below [`CAUCHY_TAIL_FRACTION`]), else [`Error::ConditionViolated`].
pub fn b_from_a(a: &FunctionalCoefficients, spec: IncrementSpec, len: usize) -> Result<Vec<f64>> {
    Ok(increment_weights(a, spec, len)?.b)
}

/// Full increment-weight computation: `b`, boundary `v`, and diagnostics.
pub fn increment_weights(
    a: &FunctionalCoefficients,
    spec: IncrementSpec,
    len: usize,
) -> Result<IncrementWeights> {
    if len == 0 {
        return Err(Error::DomainError {
            what: "increment weight window must be nonempty".into(),
        });
    }
    let coeffs = a.coeffs();
    let d = d_mu_coeffs(spec, coeffs.len());
    let b: Vec<f64> = (0..len)
        .map(|k| {
            (k..coeffs.len())
                .map(|m| coeffs[m] * d[m - k])
                .sum::<f64>()
        })
        .collect();

    let neglected_tail = match a.kind() {
        FunctionalKind::Finite => 0.0,
        FunctionalKind::TruncatedInfinite { tail_ratio, tail_constant } => {
            declared_tail_bound(spec, coeffs.len(), tail_ratio, tail_constant)
        }
    };

    let abs: Vec<f64> = b.iter().map(|x| x.abs()).collect();
    let weighted: Vec<f64> = b.iter().enumerate().map(|(k, x)| (k + 1) as f64 * x * x).collect();
    let abs_sum: f64 = abs.iter().sum();
    let weighted_sum: f64 = weighted.iter().sum();
    let half = len / 2;
    let abs_tail: f64 = abs[half..].iter().sum();
    let weighted_tail: f64 = weighted[half..].iter().sum();
    let diagnostics = WeightDiagnostics {
        abs_sum,
        abs_tail_fraction: if abs_sum > 0.0 { abs_tail / abs_sum } else { 0.0 },
        weighted_sum,
        weighted_tail_fraction: if weighted_sum > 0.0 { weighted_tail / weighted_sum } else { 0.0 },
        neglected_tail,
    };

    if neglected_tail > TAIL_CONTRIBUTION_TOL * (1.0 + abs_sum) {
        return Err(Error::ConditionViolated {
            what: format!(
                "declared tail of the functional contributes up to {neglected_tail:.3e} to the increment weights"
            ),
        });
    }
    if matches!(a.kind(), FunctionalKind::TruncatedInfinite { .. })
        && len >= 8
        && diagnostics.abs_tail_fraction > CAUCHY_TAIL_FRACTION
    {
        return Err(Error::ConditionViolated {
            what: format!(
                "partial sums of |b| still grow: trailing half-window carries {:.1}%",
                100.0 * diagnostics.abs_tail_fraction
            ),
        });
    }

    let v = v_from_b(&b, spec);
    Ok(IncrementWeights { b, v, diagnostics })
}

/// Bound on `sum_{m > K} |a(m)| d(m - k)` for any `k >= 0`, given
/// `|a(m)| <= c * rho^m`: the weights grow at most like `(m + 1)^{n-1}`, so
/// the tail is below `c * rho^{K+1} * (K + 2)^{n-1} / (1 - rho)^n`.
fn declared_tail_bound(spec: IncrementSpec, support: usize, rho: f64, c: f64) -> f64 {
    let n = spec.order() as i32;
    c * rho.powi(support as i32) * (support as f64 + 1.0).powi(n - 1) / (1.0 - rho).powi(n)
}

/// Boundary weights for the infinite window:
/// `v(k) = sum_{l = ceil(-k/mu)}^{n} (-1)^l C(n, l) b(l*mu + k)` for
/// `k = -1, ..., -mu*n`, reading `b` as zero beyond the given slice.
pub fn v_from_b(b: &[f64], spec: IncrementSpec) -> Vec<f64> {
    let n = spec.order();
    let mu = spec.step() as i64;
    boundary_weights(b, spec, |k| {
        (div_ceil(-k, mu).max(0) as u32, n)
    })
}

/// Boundary weights for the finite window of size `N + 1`: the upper limit
/// drops to `min(floor((N - k)/mu), n)`.
pub fn v_n_from_b(b: &[f64], spec: IncrementSpec, n_cap: usize) -> Vec<f64> {
    let n = spec.order();
    let mu = spec.step() as i64;
    let cap = n_cap as i64;
    boundary_weights(b, spec, |k| {
        let lower = div_ceil(-k, mu).max(0) as u32;
        let upper_raw = (cap - k).div_euclid(mu);
        let upper = upper_raw.clamp(0, n as i64) as u32;
        (lower, upper)
    })
}

fn boundary_weights(
    b: &[f64],
    spec: IncrementSpec,
    limits: impl Fn(i64) -> (u32, u32),
) -> Vec<f64> {
    let n = spec.order();
    let mu = spec.step() as i64;
    let mut v = Vec::with_capacity((mu as usize) * n as usize);
    for k in 1..=mu * n as i64 {
        let k = -k;
        let (lower, upper) = limits(k);
        let mut sum = 0.0;
        for l in lower..=upper.min(n) {
            let idx = l as i64 * mu + k;
            if idx < 0 {
                continue;
            }
            let bval = b.get(idx as usize).copied().unwrap_or(0.0);
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * poly::binomial(n, l) * bval;
        }
        v.push(sum);
    }
    v
}

fn div_ceil(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    a.div_euclid(b) + if a.rem_euclid(b) != 0 { 1 } else { 0 }
}

/// Structure of a [`StructuredMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureTag {
    /// Toeplitz matrix supported on one triangle.
    CausalToeplitz,
    /// Constant anti-diagonals `M[k, j] = m(k + j)`.
    Hankel,
}

/// Dense real matrix with a structure tag; the tag documents and tests the
/// construction, the storage is plain.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix {
    name: String,
    tag: StructureTag,
    mat: DMatrix<f64>,
}

impl StructuredMatrix {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tag(&self) -> StructureTag {
        self.tag
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Matrix-vector product; `x` must match the dimension.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.mat.ncols(), "vector length must match matrix");
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.mat * v).iter().cloned().collect()
    }

    /// Row-major CSV dump with a header naming the structure.
    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = format!("# {} ({:?}) {}x{}\n", self.name, self.tag, self.mat.nrows(), self.mat.ncols());
        for i in 0..self.mat.nrows() {
            let row: Vec<String> = (0..self.mat.ncols()).map(|j| format!("{:.17e}", self.mat[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Upper-triangular Toeplitz `D[k, j] = d(j - k)` of the given size.
pub fn build_d(spec: IncrementSpec, size: usize) -> StructuredMatrix {
    let d = d_mu_coeffs(spec, size);
    let mat = DMatrix::from_fn(size, size, |k, j| if j >= k { d[j - k] } else { 0.0 });
    StructuredMatrix {
        name: format!("increment-expansion transfer (n={}, mu={})", spec.order(), spec.step()),
        tag: StructureTag::CausalToeplitz,
        mat,
    }
}

/// Finite-window variant: the leading `(N+1) x (N+1)` block of `D`.
pub fn build_d_n(spec: IncrementSpec, n_cap: usize) -> StructuredMatrix {
    build_d(spec, n_cap + 1)
}

/// Row-reversed finite transfer: `Dhat[k, j] = D[N - k, j]`, realizing the
/// finite-window spectral identity that pairs coefficient vectors with their
/// reversals.
pub fn build_d_hat_n(spec: IncrementSpec, n_cap: usize) -> StructuredMatrix {
    let d = build_d_n(spec, n_cap);
    let size = n_cap + 1;
    let mat = DMatrix::from_fn(size, size, |k, j| d.mat()[(n_cap - k, j)]);
    StructuredMatrix {
        name: format!("row-reversed transfer (n={}, mu={})", spec.order(), spec.step()),
        tag: StructureTag::CausalToeplitz,
        mat,
    }
}

/// Lower-triangular Toeplitz `W[j, k] = w(j - k)` in the outer kernel-factor
/// coefficients. The coefficients are intrinsic to the increment spec, so
/// they are computed at full length on a grid no smaller than the default
/// size — a coarse caller grid controls evaluation elsewhere, not the
/// accuracy of these entries.
pub fn build_w(spec: IncrementSpec, grid: &FrequencyGrid, size: usize) -> Result<StructuredMatrix> {
    let work_grid = if grid.size() >= crate::grid::DEFAULT_GRID_SIZE {
        grid.clone()
    } else {
        FrequencyGrid::new(crate::grid::DEFAULT_GRID_SIZE)?
    };
    if 2 * size > work_grid.size() {
        return Err(Error::DomainError {
            what: format!("matrix size {size} needs grid at least {}", 2 * size),
        });
    }
    let w = outer_factor_full(spec, &work_grid)?;
    let coeffs = w.coeffs();
    let mat = DMatrix::from_fn(size, size, |j, k| {
        if j >= k {
            coeffs.get(j - k).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    });
    Ok(StructuredMatrix {
        name: format!("outer-factor transfer (n={}, mu={})", spec.order(), spec.step()),
        tag: StructureTag::CausalToeplitz,
        mat,
    })
}

/// Finite-window variant of [`build_w`].
pub fn build_w_n(spec: IncrementSpec, grid: &FrequencyGrid, n_cap: usize) -> Result<StructuredMatrix> {
    build_w(spec, grid, n_cap + 1)
}

/// Hankel matrix `A[k, j] = a(k + j)` (zero beyond the stored support).
pub fn build_a(a: &FunctionalCoefficients, size: usize) -> StructuredMatrix {
    let c = a.coeffs();
    let mat = DMatrix::from_fn(size, size, |k, j| c.get(k + j).copied().unwrap_or(0.0));
    StructuredMatrix {
        name: "functional Hankel".into(),
        tag: StructureTag::Hankel,
        mat,
    }
}

/// Finite-window Hankel: entries vanish for `k + j > N` even when the
/// functional stores more coefficients.
pub fn build_a_n(a: &FunctionalCoefficients, n_cap: usize) -> StructuredMatrix {
    let c = a.coeffs();
    let size = n_cap + 1;
    let mat = DMatrix::from_fn(size, size, |k, j| {
        if k + j > n_cap {
            0.0
        } else {
            c.get(k + j).copied().unwrap_or(0.0)
        }
    });
    StructuredMatrix {
        name: "windowed functional Hankel".into(),
        tag: StructureTag::Hankel,
        mat,
    }
}

/// Hankel matrix `B[k, j] = b(k + j)` over increment weights.
pub fn build_b(b: &[f64], size: usize) -> StructuredMatrix {
    let mat = DMatrix::from_fn(size, size, |k, j| b.get(k + j).copied().unwrap_or(0.0));
    StructuredMatrix {
        name: "increment-weight Hankel".into(),
        tag: StructureTag::Hankel,
        mat,
    }
}
