//! FFT plumbing for the midpoint frequency grid.
//!
//! The grid nodes are `lambda_j = -pi + (j + 1/2) * (2pi/G)`, so Fourier sums
//! over the nodes differ from a plain DFT by the phase
//! `exp(i*k*pi*(1 - 1/G))`. The helpers here hide that bookkeeping:
//!
//! - [`series_coefficients`]: `c_k = (1/2pi) * int x(lambda) e^{-i k lambda}`
//!   approximated by the midpoint rule, for any integer window of `k`.
//! - [`eval_causal`]: samples of `sum_k c_k e^{-i lambda k}` (power series in
//!   `z = e^{-i lambda}`).
//! - [`eval_anticausal`]: samples of `sum_k c_k e^{+i lambda k}`.
//!
//! All spectral sums in the crate are reduced to these three operations, so
//! the phase convention lives in exactly one place.

use crate::grid::FrequencyGrid;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Phase factor `exp(i * k * pi * (1 - 1/G))`, evaluated with the angle
/// reduced modulo `2*pi` exactly so large lags lose no precision.
pub fn midpoint_phase(k: i64, g: usize) -> Complex64 {
    let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let r = k.rem_euclid(2 * g as i64) as f64;
    let angle = -std::f64::consts::PI * r / g as f64;
    sign * Complex64::from_polar(1.0, angle)
}

fn dft_forward(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(buf.len());
    fft.process(buf);
}

/// Midpoint-rule Fourier coefficients of real grid samples for every lag in
/// `lags` (may be negative).
pub fn series_coefficients(samples: &[f64], grid: &FrequencyGrid, lags: &[i64]) -> Vec<Complex64> {
    let g = grid.size();
    assert_eq!(samples.len(), g);
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft_forward(&mut buf);
    lags.iter()
        .map(|&k| {
            let idx = k.rem_euclid(g as i64) as usize;
            buf[idx] * midpoint_phase(k, g) / g as f64
        })
        .collect()
}

/// Complex-sample variant of [`series_coefficients`].
pub fn series_coefficients_complex(
    samples: &[Complex64],
    grid: &FrequencyGrid,
    lags: &[i64],
) -> Vec<Complex64> {
    let g = grid.size();
    assert_eq!(samples.len(), g);
    let mut buf = samples.to_vec();
    dft_forward(&mut buf);
    lags.iter()
        .map(|&k| {
            let idx = k.rem_euclid(g as i64) as usize;
            buf[idx] * midpoint_phase(k, g) / g as f64
        })
        .collect()
}

/// Samples of the causal series `sum_{k>=0} coeffs[k] * e^{-i lambda_j k}`.
///
/// Exact (up to rounding) while `coeffs.len() <= G`; longer series alias.
pub fn eval_causal(coeffs: &[f64], grid: &FrequencyGrid) -> Vec<Complex64> {
    let g = grid.size();
    let mut buf = vec![Complex64::new(0.0, 0.0); g];
    for (k, &c) in coeffs.iter().enumerate() {
        // e^{-i lambda_j k} = phase(k) * e^{-2pi i jk/G}; the DFT factor only
        // sees k mod G, and phase() reduces k exactly, so series longer than
        // the grid fold in without error.
        buf[k % g] += c * midpoint_phase(k as i64, g);
    }
    dft_forward(&mut buf);
    buf
}

/// Samples of the anticausal series `sum_{k>=0} coeffs[k] * e^{+i lambda_j k}`.
pub fn eval_anticausal(coeffs: &[f64], grid: &FrequencyGrid) -> Vec<Complex64> {
    eval_causal(coeffs, grid).into_iter().map(|z| z.conj()).collect()
}

/// Squared modulus of the causal series on the grid.
pub fn modulus_sq_causal(coeffs: &[f64], grid: &FrequencyGrid) -> Vec<f64> {
    eval_causal(coeffs, grid)
        .into_iter()
        .map(|z| z.norm_sqr())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_recover_trig_polynomial() {
        let grid = FrequencyGrid::new(64).unwrap();
        // x(l) = 1.5 + cos(2l) + 0.25 sin(5l)
        let samples: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&l| 1.5 + (2.0 * l).cos() + 0.25 * (5.0 * l).sin())
            .collect();
        let lags: Vec<i64> = (-6..=6).collect();
        let c = series_coefficients(&samples, &grid, &lags);
        let get = |k: i64| c[(k + 6) as usize];
        assert!((get(0) - Complex64::new(1.5, 0.0)).norm() < 1e-13);
        assert!((get(2) - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!((get(-2) - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        // sin(5l) = (e^{i5l} - e^{-i5l}) / (2i): c_5 = -0.25/(2i)*... = i/8 * (-1)?
        assert!((get(5) - Complex64::new(0.0, -0.125)).norm() < 1e-13);
        assert!((get(-5) - Complex64::new(0.0, 0.125)).norm() < 1e-13);
        assert!(get(3).norm() < 1e-13);
    }

    #[test]
    fn eval_matches_direct_sum() {
        let grid = FrequencyGrid::new(32).unwrap();
        let coeffs = [1.0, -0.3, 0.2, 0.05];
        let fast = eval_causal(&coeffs, &grid);
        for (j, &l) in grid.nodes().iter().enumerate() {
            let direct: Complex64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * Complex64::from_polar(1.0, -l * k as f64))
                .sum();
            assert!((fast[j] - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn anticausal_is_conjugate_for_real_coefficients() {
        let grid = FrequencyGrid::new(16).unwrap();
        let coeffs = [0.7, 0.1, -0.4];
        let a = eval_anticausal(&coeffs, &grid);
        for (j, &l) in grid.nodes().iter().enumerate() {
            let direct: Complex64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * Complex64::from_polar(1.0, l * k as f64))
                .sum();
            assert!((a[j] - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_coefficients_eval() {
        // series_coefficients(s, k) = mean(s * e^{-i lambda k}), so the
        // weight of e^{-i lambda m} in a causal series comes back at lag -m.
        let grid = FrequencyGrid::new(128).unwrap();
        let coeffs = [2.0, 0.5, 0.25, -0.125, 0.0625];
        let samples = eval_causal(&coeffs, &grid);
        let lags: Vec<i64> = (0..8).map(|k| -k).collect();
        let rec = series_coefficients_complex(&samples, &grid, &lags);
        for k in 0..8 {
            let want = if k < coeffs.len() { coeffs[k] } else { 0.0 };
            assert!((rec[k] - Complex64::new(want, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn eval_folds_series_longer_than_grid() {
        let grid = FrequencyGrid::new(16).unwrap();
        let coeffs: Vec<f64> = (0..40).map(|k| 0.8f64.powi(k)).collect();
        let folded = eval_causal(&coeffs, &grid);
        for (j, &l) in grid.nodes().iter().enumerate() {
            let direct: Complex64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * Complex64::from_polar(1.0, -l * k as f64))
                .sum();
            assert!((folded[j] - direct).norm() < 1e-12);
        }
    }
}
