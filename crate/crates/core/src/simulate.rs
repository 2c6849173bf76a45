//! Monte Carlo validation of the analytic mean-square errors.
//!
//! Increment paths are drawn from the canonical moving-average
//! representation: the increment at offset `m` is `sum_k phi(k) eps(m - k)`
//! with independent standard-normal innovations, the sum truncated exactly at
//! the factor length. Raw paths are recovered by inverting the increment
//! operator recursively from supplied initial values, and
//! [`empirical_mse`] applies the time-domain weights of an estimate to the
//! observed side of each path, forms the target from the future side, and
//! reports the z-score of the empirical against the analytic error.
//!
//! Conventions:
//! - every trial draws from an independent, reproducible stream derived from
//!   `(seed, trial index)`, and all reductions are pairwise sums in trial
//!   order, so reports are bit-identical across thread counts;
//! - inside [`empirical_mse`] path index `j` corresponds to time
//!   `j - origin`, where the origin is the deepest lag the weights reach (at
//!   least the increment reach `n * step`), so the observed window and the
//!   targets both live strictly inside the simulated span.

use crate::error::{Error, Result};
use crate::extrapolate::EstimateResult;
use crate::grid::pairwise_sum;
use crate::increments::FunctionalCoefficients;
use crate::poly;
use crate::spectral::{CanonicalFactor, IncrementSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Everything needed to generate a batch of increment paths.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    spec: IncrementSpec,
    factor: CanonicalFactor,
    path_length: usize,
    burn_in: usize,
    trials: usize,
    seed: u64,
}

impl SimulationConfig {
    /// Configuration with the default burn-in of one factor length, which
    /// makes every emitted increment an exact draw from the moving average.
    pub fn new(
        spec: IncrementSpec,
        factor: CanonicalFactor,
        path_length: usize,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        let burn_in = factor.coeffs().len();
        Self::with_burn_in(spec, factor, path_length, burn_in, trials, seed)
    }

    /// Configuration with an explicit burn-in. Innovations before the start
    /// of the warm-up are treated as zero, so a burn-in shorter than the
    /// factor length leaves the earliest increments only partially driven.
    pub fn with_burn_in(
        spec: IncrementSpec,
        factor: CanonicalFactor,
        path_length: usize,
        burn_in: usize,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        if trials == 0 {
            return Err(Error::DomainError {
                what: "simulation needs at least one trial".into(),
            });
        }
        if path_length <= burn_in {
            return Err(Error::DomainError {
                what: format!(
                    "path length {path_length} must exceed the burn-in {burn_in}"
                ),
            });
        }
        Ok(Self {
            spec,
            factor,
            path_length,
            burn_in,
            trials,
            seed,
        })
    }

    pub fn spec(&self) -> IncrementSpec {
        self.spec
    }

    pub fn factor(&self) -> &CanonicalFactor {
        &self.factor
    }

    pub fn path_length(&self) -> usize {
        self.path_length
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// One batch of increment paths, one row per trial, `path_length` entries
/// per row. Trials are generated concurrently; row `t` always comes from the
/// stream `(seed, t)` regardless of thread count.
pub fn simulate_increments(config: &SimulationConfig) -> Vec<Vec<f64>> {
    (0..config.trials)
        .into_par_iter()
        .map(|trial| simulate_one(config, trial as u64))
        .collect()
}

fn simulate_one(config: &SimulationConfig, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let total = config.burn_in + config.path_length;
    let eps: Vec<f64> = (0..total)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let phi = config.factor.coeffs();
    (0..config.path_length)
        .map(|m| {
            let pos = config.burn_in + m;
            phi.iter()
                .enumerate()
                .take_while(|(k, _)| *k <= pos)
                .map(|(k, &c)| c * eps[pos - k])
                .sum()
        })
        .collect()
}

/// Raw paths recovered from increment paths by the recursive inversion of
/// the increment operator. `initial` holds the `n * step` raw values that
/// immediately precede the first increment, in chronological order
/// (`initial[i]` sits at offset `i - n * step` relative to the path start).
pub fn integrate_to_sequence(
    increments: &[Vec<f64>],
    spec: IncrementSpec,
    initial: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let reach = (spec.order() * spec.step()) as usize;
    if initial.len() != reach {
        return Err(Error::DomainError {
            what: format!(
                "integration needs {reach} initial values, got {}",
                initial.len()
            ),
        });
    }
    Ok(increments
        .par_iter()
        .map(|path| integrate_one(path, spec, initial))
        .collect())
}

fn integrate_one(path: &[f64], spec: IncrementSpec, initial: &[f64]) -> Vec<f64> {
    let n = spec.order() as usize;
    let mu = spec.step() as usize;
    let reach = (n * mu) as i64;
    let mut xi = vec![0.0_f64; path.len()];
    for (m, &inc) in path.iter().enumerate() {
        let mut acc = inc;
        for l in 1..=n {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let coef = sign * poly::binomial(n as u32, l as u32);
            let idx = m as i64 - (l * mu) as i64;
            let past = if idx >= 0 {
                xi[idx as usize]
            } else {
                initial[(idx + reach) as usize]
            };
            acc -= coef * past;
        }
        xi[m] = acc;
    }
    xi
}

/// The increments of a raw path, the difference audit for
/// [`integrate_to_sequence`]: feeding its output back through this function
/// reproduces the original increments up to rounding. Offsets before the
/// path start use the same `initial` convention.
pub fn increments_from_sequence(
    path: &[f64],
    spec: IncrementSpec,
    initial: &[f64],
) -> Result<Vec<f64>> {
    let n = spec.order() as usize;
    let mu = spec.step() as usize;
    let reach = (n * mu) as i64;
    if initial.len() != reach as usize {
        return Err(Error::DomainError {
            what: format!(
                "increment audit needs {reach} initial values, got {}",
                initial.len()
            ),
        });
    }
    Ok((0..path.len())
        .map(|m| {
            let mut acc = 0.0;
            for l in 0..=n {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                let coef = sign * poly::binomial(n as u32, l as u32);
                let idx = m as i64 - (l * mu) as i64;
                let val = if idx >= 0 {
                    path[idx as usize]
                } else {
                    initial[(idx + reach) as usize]
                };
                acc += coef * val;
            }
            acc
        })
        .collect())
}

/// What the estimate is compared against on each simulated path.
#[derive(Debug, Clone, Copy)]
pub enum SimulationTarget<'a> {
    /// The value functional `sum_k a(k) xi(k)` over the stored coefficients
    /// (a declared tail beyond them is not simulated).
    Functional { a: &'a FunctionalCoefficients },
    /// The single increment at offset `m >= 0`.
    Increment { m: usize },
    /// The single raw value at offset `m` (estimable when `m < step`).
    Value { m: usize },
}

impl SimulationTarget<'_> {
    fn future_reach(&self) -> usize {
        match self {
            SimulationTarget::Functional { a } => a.coeffs().len().saturating_sub(1),
            SimulationTarget::Increment { m } | SimulationTarget::Value { m } => *m,
        }
    }

    fn evaluate(&self, path: &[f64], origin: usize, spec: IncrementSpec) -> f64 {
        match self {
            SimulationTarget::Functional { a } => a
                .coeffs()
                .iter()
                .enumerate()
                .map(|(k, &c)| c * path[origin + k])
                .sum(),
            SimulationTarget::Increment { m } => {
                let n = spec.order() as usize;
                let mu = spec.step() as usize;
                let mut acc = 0.0;
                for l in 0..=n {
                    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign
                        * poly::binomial(n as u32, l as u32)
                        * path[origin + m - l * mu];
                }
                acc
            }
            SimulationTarget::Value { m } => path[origin + m],
        }
    }
}

/// Empirical verdict on one estimate: the mean squared realized error, its
/// standard error across trials, the analytic value it is supposed to match,
/// and the resulting z-score.
#[derive(Debug, Clone)]
pub struct EmpiricalReport {
    empirical: f64,
    standard_error: f64,
    analytic: f64,
    z: f64,
    trials: usize,
}

impl EmpiricalReport {
    pub fn empirical(&self) -> f64 {
        self.empirical
    }

    /// Standard error of the empirical mean square; infinite for a single
    /// trial.
    pub fn standard_error(&self) -> f64 {
        self.standard_error
    }

    pub fn analytic(&self) -> f64 {
        self.analytic
    }

    /// `(empirical - analytic) / standard_error`; zero when the standard
    /// error is degenerate.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "empirical_mse": self.empirical,
            "standard_error": self.standard_error,
            "analytic_mse": self.analytic,
            "z": self.z,
            "trials": self.trials,
        })
    }
}

/// Paired optimality control: the optimal weights against a deliberately
/// rescaled copy on the same paths.
#[derive(Debug, Clone)]
pub struct DetunedReport {
    optimal_mse: f64,
    detuned_mse: f64,
    mean_excess: f64,
    excess_standard_error: f64,
    z: f64,
    trials: usize,
}

impl DetunedReport {
    pub fn optimal_mse(&self) -> f64 {
        self.optimal_mse
    }

    pub fn detuned_mse(&self) -> f64 {
        self.detuned_mse
    }

    /// Mean of the per-trial squared-error excess (detuned minus optimal).
    pub fn mean_excess(&self) -> f64 {
        self.mean_excess
    }

    pub fn excess_standard_error(&self) -> f64 {
        self.excess_standard_error
    }

    /// One-sided z-score of the excess; positive values certify that the
    /// detuned weights lose.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "optimal_mse": self.optimal_mse,
            "detuned_mse": self.detuned_mse,
            "mean_excess": self.mean_excess,
            "excess_standard_error": self.excess_standard_error,
            "z": self.z,
            "trials": self.trials,
        })
    }
}

/// Per-trial `(target, estimate)` pairs. The origin is the deepest weight
/// lag (at least the increment reach), so every path must span
/// `origin + future reach + 1` values.
fn target_and_estimate(
    estimate: &EstimateResult,
    paths: &[Vec<f64>],
    spec: IncrementSpec,
    target: &SimulationTarget<'_>,
) -> Result<Vec<(f64, f64)>> {
    if paths.is_empty() {
        return Err(Error::DomainError {
            what: "no paths supplied".into(),
        });
    }
    let depth = estimate
        .past_weights()
        .iter()
        .map(|&(lag, _)| (-lag) as usize)
        .max()
        .unwrap_or(0);
    let reach = (spec.order() * spec.step()) as usize;
    let origin = depth.max(reach);
    let needed = origin + target.future_reach() + 1;
    let available = paths.iter().map(Vec::len).min().unwrap_or(0);
    if available < needed {
        return Err(Error::HorizonExceeded { needed, available });
    }
    Ok(paths
        .par_iter()
        .map(|path| {
            let tgt = target.evaluate(path, origin, spec);
            let est: f64 = estimate
                .past_weights()
                .iter()
                .map(|&(lag, w)| w * path[(origin as i64 + lag) as usize])
                .sum();
            (tgt, est)
        })
        .collect())
}

/// Per-trial realized errors `target - estimate`, in trial order (the raw
/// material for per-trial dumps).
pub fn estimation_errors(
    estimate: &EstimateResult,
    paths: &[Vec<f64>],
    spec: IncrementSpec,
    target: &SimulationTarget<'_>,
) -> Result<Vec<f64>> {
    Ok(target_and_estimate(estimate, paths, spec, target)?
        .into_iter()
        .map(|(tgt, est)| tgt - est)
        .collect())
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    let mean = pairwise_sum(values) / r as f64;
    if r < 2 {
        return (mean, f64::INFINITY);
    }
    let dev: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (r - 1) as f64;
    (mean, (var / r as f64).sqrt())
}

/// Empirical mean-square error of an estimate over simulated raw paths,
/// compared against its analytic value.
pub fn empirical_mse(
    estimate: &EstimateResult,
    paths: &[Vec<f64>],
    spec: IncrementSpec,
    target: &SimulationTarget<'_>,
) -> Result<EmpiricalReport> {
    let sq: Vec<f64> = target_and_estimate(estimate, paths, spec, target)?
        .into_iter()
        .map(|(tgt, est)| (tgt - est) * (tgt - est))
        .collect();
    let (empirical, standard_error) = mean_and_se(&sq);
    let analytic = estimate.mse();
    let z = if standard_error.is_finite() && standard_error > 0.0 {
        (empirical - analytic) / standard_error
    } else {
        0.0
    };
    Ok(EmpiricalReport {
        empirical,
        standard_error,
        analytic,
        z,
        trials: sq.len(),
    })
}

/// Paired optimality control: every past weight is rescaled by
/// `weight_scale` and both estimators run over the same paths. The report
/// carries the one-sided z-score of the per-trial squared-error excess,
/// which must be positive for any scale other than one.
pub fn detuned_excess(
    estimate: &EstimateResult,
    paths: &[Vec<f64>],
    spec: IncrementSpec,
    target: &SimulationTarget<'_>,
    weight_scale: f64,
) -> Result<DetunedReport> {
    if weight_scale == 1.0 || !weight_scale.is_finite() {
        return Err(Error::DomainError {
            what: "detuning scale must be finite and differ from one".into(),
        });
    }
    let pairs = target_and_estimate(estimate, paths, spec, target)?;
    let opt_sq: Vec<f64> = pairs
        .iter()
        .map(|&(tgt, est)| (tgt - est) * (tgt - est))
        .collect();
    let det_sq: Vec<f64> = pairs
        .iter()
        .map(|&(tgt, est)| {
            let e = tgt - weight_scale * est;
            e * e
        })
        .collect();
    let excess: Vec<f64> = det_sq
        .iter()
        .zip(opt_sq.iter())
        .map(|(d, o)| d - o)
        .collect();
    let (mean_excess, excess_standard_error) = mean_and_se(&excess);
    let z = if excess_standard_error.is_finite() && excess_standard_error > 0.0 {
        mean_excess / excess_standard_error
    } else {
        0.0
    };
    Ok(DetunedReport {
        optimal_mse: pairwise_sum(&opt_sq) / opt_sq.len() as f64,
        detuned_mse: pairwise_sum(&det_sq) / det_sq.len() as f64,
        mean_excess,
        excess_standard_error,
        z,
        trials: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrapolate::{estimate_functional_a, predict_increment, predict_value};
    use crate::grid::FrequencyGrid;
    use crate::spectral::integrated_ma1_density;
    use num_complex::Complex64;
    use rand::Rng;
    use rustfft::FftPlanner;

    fn factor(coeffs: &[f64]) -> CanonicalFactor {
        CanonicalFactor::new(coeffs.to_vec()).unwrap()
    }

    fn config(
        spec: IncrementSpec,
        coeffs: &[f64],
        path_length: usize,
        trials: usize,
        seed: u64,
    ) -> SimulationConfig {
        SimulationConfig::new(spec, factor(coeffs), path_length, trials, seed).unwrap()
    }

    /// Sample autocovariance at `lag`, averaged per path, with the standard
    /// error of the across-path mean.
    fn lag_cov_stats(paths: &[Vec<f64>], lag: usize) -> (f64, f64) {
        let per_path: Vec<f64> = paths
            .iter()
            .map(|p| {
                let m = p.len() - lag;
                (0..m).map(|t| p[t] * p[t + lag]).sum::<f64>() / m as f64
            })
            .collect();
        mean_and_se(&per_path)
    }

    #[test]
    fn config_rejects_degenerate_shapes() {
        let spec = IncrementSpec::new(1, 1).unwrap();
        assert!(SimulationConfig::new(spec, factor(&[1.0]), 64, 0, 1).is_err());
        assert!(
            SimulationConfig::with_burn_in(spec, factor(&[1.0]), 16, 16, 4, 1).is_err()
        );
        assert!(SimulationConfig::new(spec, factor(&[1.0]), 64, 4, 1).is_ok());
    }

    #[test]
    fn identical_seed_reproduces_paths_bitwise() {
        let spec = IncrementSpec::new(2, 2).unwrap();
        let cfg = config(spec, &[1.0, 0.4, -0.2], 128, 8, 97);
        let first = simulate_increments(&cfg);
        let second = simulate_increments(&cfg);
        assert_eq!(first, second);
        let other = config(spec, &[1.0, 0.4, -0.2], 128, 8, 98);
        assert_ne!(simulate_increments(&other), first);
    }

    #[test]
    fn sample_mean_of_increments_vanishes() {
        let spec = IncrementSpec::new(1, 1).unwrap();
        let cfg = config(spec, &[1.0, 0.5], 512, 200, 3);
        let paths = simulate_increments(&cfg);
        let per_path: Vec<f64> = paths
            .iter()
            .map(|p| p.iter().sum::<f64>() / p.len() as f64)
            .collect();
        let (mean, se) = mean_and_se(&per_path);
        assert!(
            mean.abs() <= 3.0 * se,
            "increment mean {mean} exceeds 3 standard errors {se}"
        );
    }

    #[test]
    fn white_noise_increments_have_vanishing_lag_one_autocovariance() {
        let spec = IncrementSpec::new(1, 1).unwrap();
        let cfg = config(spec, &[1.0], 512, 200, 5);
        let paths = simulate_increments(&cfg);
        let (cov, se) = lag_cov_stats(&paths, 1);
        assert!(
            cov.abs() <= 3.0 * se,
            "white-noise lag-1 autocovariance {cov} exceeds 3 standard errors {se}"
        );
    }

    #[test]
    fn ma_one_lag_one_autocovariance_matches_oracle() {
        // Moving average (1, 0.5): autocovariance at lag 1 is 1 * 0.5.
        let spec = IncrementSpec::new(1, 1).unwrap();
        let cfg = config(spec, &[1.0, 0.5], 512, 200, 7);
        let paths = simulate_increments(&cfg);
        let (cov, se) = lag_cov_stats(&paths, 1);
        assert!(
            (cov - 0.5).abs() <= 3.0 * se,
            "lag-1 autocovariance {cov} vs 0.5 with standard error {se}"
        );
    }

    #[test]
    fn averaged_periodogram_tracks_factor_modulus() {
        let spec = IncrementSpec::new(1, 1).unwrap();
        let coeffs = [1.0, 0.5];
        let t = 4096;
        let cfg = SimulationConfig::with_burn_in(
            spec,
            factor(&coeffs),
            t,
            coeffs.len(),
            200,
            13,
        )
        .unwrap();
        let paths = simulate_increments(&cfg);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(t);
        let mut avg = vec![0.0_f64; t];
        for path in &paths {
            let mut buf: Vec<Complex64> =
                path.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.process(&mut buf);
            for (a, z) in avg.iter_mut().zip(buf.iter()) {
                *a += z.norm_sqr() / t as f64;
            }
        }
        for a in avg.iter_mut() {
            *a /= paths.len() as f64;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &a) in avg.iter().enumerate() {
            let lambda = 2.0 * std::f64::consts::PI * j as f64 / t as f64;
            let z = Complex64::from_polar(1.0, -lambda);
            let g = (Complex64::new(coeffs[0], 0.0) + coeffs[1] * z).norm_sqr();
            num += (a - g).abs();
            den += g;
        }
        assert!(
            num / den <= 0.10,
            "periodogram relative L1 deviation {} above 10%",
            num / den
        );
    }

    #[test]
    fn integration_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n, mu) in &[(1u32, 1u32), (1, 3), (2, 2), (3, 1)] {
            let spec = IncrementSpec::new(n, mu).unwrap();
            let reach = (n * mu) as usize;
            let increments: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let initial: Vec<f64> =
                (0..reach).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let paths = integrate_to_sequence(&increments, spec, &initial).unwrap();
            for (inc, path) in increments.iter().zip(paths.iter()) {
                let back = increments_from_sequence(path, spec, &initial).unwrap();
                let scale = 1.0
                    + path.iter().map(|x| x.abs()).fold(0.0_f64, f64::max);
                for (orig, rec) in inc.iter().zip(back.iter()) {
                    assert!(
                        (orig - rec).abs() <= 1e-12 * scale,
                        "round trip off by {} at order {n} step {mu}",
                        (orig - rec).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn integration_is_cumulative_sum_for_first_order_unit_step() {
        let spec = IncrementSpec::new(1, 1).unwrap();
        let increments = vec![vec![0.3, -1.2, 0.7, 2.0, -0.4]];
        let paths = integrate_to_sequence(&increments, spec, &[0.0]).unwrap();
        let mut running = 0.0;
        for (inc, val) in increments[0].iter().zip(paths[0].iter()) {
            running += inc;
            assert_eq!(running, *val);
        }
    }

    #[test]
    fn integration_rejects_wrong_initial_length() {
        let spec = IncrementSpec::new(2, 3).unwrap();
        let err =
            integrate_to_sequence(&[vec![0.0; 8]], spec, &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::DomainError { .. }));
    }

    #[test]
    fn step_aggregation_identity_on_paths() {
        // Increments at an aggregated step k*mu are the base-step increments
        // combined with the coefficients of (1 + x + ... + x^{k-1})^n.
        let n = 2u32;
        let mu = 2u32;
        let k = 3u32;
        let spec = IncrementSpec::new(n, mu).unwrap();
        let wide = IncrementSpec::new(n, k * mu).unwrap();
        let cfg = config(spec, &[1.0, 0.6, 0.2], 256, 4, 31);
        let chi = simulate_increments(&cfg);
        let reach = (n * mu) as usize;
        let xi = integrate_to_sequence(&chi, spec, &vec![0.0; reach]).unwrap();
        let window: Vec<f64> = vec![1.0; k as usize];
        let agg = poly::pow_conv(&window, n);
        let wide_reach = (n * k * mu) as usize;
        for (inc, path) in chi.iter().zip(xi.iter()) {
            let wide_inc =
                increments_from_sequence(path, wide, &vec![0.0; wide_reach]).unwrap();
            let scale =
                1.0 + path.iter().map(|x| x.abs()).fold(0.0_f64, f64::max);
            for m in wide_reach..path.len() {
                let combined: f64 = agg
                    .iter()
                    .enumerate()
                    .map(|(l, &w)| w * inc[m - l * mu as usize])
                    .sum();
                assert!(
                    (wide_inc[m] - combined).abs() <= 1e-12 * scale,
                    "aggregated increment off by {} at offset {m}",
                    (wide_inc[m] - combined).abs()
                );
            }
        }
    }

    #[test]
    fn functional_empirical_mse_matches_analytic() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 1).unwrap();
        let f = integrated_ma1_density(&grid, 0.5).unwrap();
        let a = FunctionalCoefficients::finite(vec![1.0, 1.0]).unwrap();
        let est = estimate_functional_a(&a, &f, spec).unwrap();
        assert!((est.mse() - 7.25).abs() <= 1e-6);
        let cfg = config(spec, &[1.0, 0.5], 640, 400, 2026);
        let chi = simulate_increments(&cfg);
        let xi = integrate_to_sequence(&chi, spec, &[0.0]).unwrap();
        let report =
            empirical_mse(&est, &xi, spec, &SimulationTarget::Functional { a: &a })
                .unwrap();
        assert!(report.standard_error() > 0.0);
        assert_eq!(report.trials(), 400);
        assert!(
            report.z().abs() <= 3.0,
            "functional z-score {} (empirical {} vs analytic {})",
            report.z(),
            report.empirical(),
            report.analytic()
        );
    }

    #[test]
    fn increment_prediction_empirical_matches_innovation_variance() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 1).unwrap();
        let phi = factor(&[1.0, 0.5]);
        let est = predict_increment(0, spec, &phi, &grid).unwrap();
        assert!((est.mse() - 1.0).abs() <= 1e-10);
        let cfg = config(spec, &[1.0, 0.5], 640, 400, 41);
        let chi = simulate_increments(&cfg);
        let xi = integrate_to_sequence(&chi, spec, &[0.0]).unwrap();
        let report =
            empirical_mse(&est, &xi, spec, &SimulationTarget::Increment { m: 0 })
                .unwrap();
        assert!(
            report.z().abs() <= 3.0,
            "increment z-score {} (empirical {} vs analytic {})",
            report.z(),
            report.empirical(),
            report.analytic()
        );
    }

    #[test]
    fn value_prediction_empirical_matches_analytic() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 2).unwrap();
        let phi = factor(&[1.0, 0.4]);
        let est = predict_value(0, spec, &phi, &grid).unwrap();
        let cfg = config(spec, &[1.0, 0.4], 640, 400, 53);
        let chi = simulate_increments(&cfg);
        let xi = integrate_to_sequence(&chi, spec, &[0.0, 0.0]).unwrap();
        let report = empirical_mse(&est, &xi, spec, &SimulationTarget::Value { m: 0 })
            .unwrap();
        assert!(
            report.z().abs() <= 3.0,
            "value z-score {} (empirical {} vs analytic {})",
            report.z(),
            report.empirical(),
            report.analytic()
        );
    }

    #[test]
    fn reports_are_insensitive_to_integration_initial_values() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 1).unwrap();
        let f = integrated_ma1_density(&grid, 0.5).unwrap();
        let a = FunctionalCoefficients::finite(vec![1.0, 1.0]).unwrap();
        let est = estimate_functional_a(&a, &f, spec).unwrap();
        let cfg = config(spec, &[1.0, 0.5], 640, 64, 67);
        let chi = simulate_increments(&cfg);
        let target = SimulationTarget::Functional { a: &a };
        let xi_zero = integrate_to_sequence(&chi, spec, &[0.0]).unwrap();
        let xi_bent = integrate_to_sequence(&chi, spec, &[5.0]).unwrap();
        let zero = empirical_mse(&est, &xi_zero, spec, &target).unwrap();
        let bent = empirical_mse(&est, &xi_bent, spec, &target).unwrap();
        assert!(
            (zero.empirical() - bent.empirical()).abs()
                <= 1e-6 * (1.0 + zero.empirical()),
            "initialization leaks into the error: {} vs {}",
            zero.empirical(),
            bent.empirical()
        );
    }

    #[test]
    fn detuned_weights_lose_on_shared_paths() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 1).unwrap();
        let f = integrated_ma1_density(&grid, 0.5).unwrap();
        let a = FunctionalCoefficients::finite(vec![1.0, 1.0]).unwrap();
        let est = estimate_functional_a(&a, &f, spec).unwrap();
        let cfg = config(spec, &[1.0, 0.5], 640, 300, 71);
        let chi = simulate_increments(&cfg);
        let xi = integrate_to_sequence(&chi, spec, &[0.0]).unwrap();
        let target = SimulationTarget::Functional { a: &a };
        let report = detuned_excess(&est, &xi, spec, &target, 1.1).unwrap();
        assert!(report.mean_excess() > 0.0);
        assert!(report.detuned_mse() > report.optimal_mse());
        assert!(
            report.z() >= 2.0,
            "detuned weights should lose decisively, z = {}",
            report.z()
        );
        assert!(detuned_excess(&est, &xi, spec, &target, 1.0).is_err());
    }

    #[test]
    fn short_paths_are_rejected_with_horizon_error() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 1).unwrap();
        let phi = factor(&[1.0, 0.5]);
        let est = predict_increment(0, spec, &phi, &grid).unwrap();
        let cfg = config(spec, &[1.0, 0.5], 100, 4, 3);
        let chi = simulate_increments(&cfg);
        let xi = integrate_to_sequence(&chi, spec, &[0.0]).unwrap();
        let err = empirical_mse(&est, &xi, spec, &SimulationTarget::Increment { m: 0 })
            .unwrap_err();
        assert!(matches!(err, Error::HorizonExceeded { .. }));
    }

    #[test]
    fn empirical_reports_are_reproducible() {
        let grid = FrequencyGrid::new(1024).unwrap();
        let spec = IncrementSpec::new(1, 1).unwrap();
        let phi = factor(&[1.0, 0.5]);
        let est = predict_increment(1, spec, &phi, &grid).unwrap();
        let cfg = config(spec, &[1.0, 0.5], 600, 50, 77);
        let xi =
            integrate_to_sequence(&simulate_increments(&cfg), spec, &[0.0]).unwrap();
        let target = SimulationTarget::Increment { m: 1 };
        let one = empirical_mse(&est, &xi, spec, &target).unwrap();
        let two = empirical_mse(&est, &xi, spec, &target).unwrap();
        assert_eq!(one.empirical().to_bits(), two.empirical().to_bits());
        assert_eq!(one.z().to_bits(), two.z().to_bits());
        let json = one.to_json();
        assert_eq!(json["trials"], 50);
        assert!(json["standard_error"].as_f64().unwrap() > 0.0);
    }
}
