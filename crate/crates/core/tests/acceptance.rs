//! End-to-end acceptance suite: one test per shipped guarantee, each
//! printing a single `[PASS]`/`[FAIL]` line (visible with `--nocapture`).
//! Tolerances are pinned next to each criterion.

use increx_core::extrapolate::{
    estimate_functional_a, estimate_functional_a_n, mse_b, predict_increment,
};
use increx_core::fourier;
use increx_core::grid::{DensityGrid, FrequencyGrid};
use increx_core::increments::{
    build_a_n, build_d_hat_n, build_d_n, build_w_n, FunctionalCoefficients,
};
use increx_core::minimax::{
    least_favorable, least_favorable_band, least_favorable_power_cap_finite,
    least_favorable_power_cap_infinite, saddle_check, two_term_closed_form, DensityClassSpec,
};
use increx_core::poly;
use increx_core::simulate::{
    detuned_excess, empirical_mse, integrate_to_sequence, simulate_increments, SimulationConfig,
    SimulationTarget,
};
use increx_core::spectral::{
    canonical_factorization, increment_density_factor, integrated_ma1_density, outer_factor_full,
    CanonicalFactor, IncrementSpec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Criterion 1: closed-form error of the two-point functional.
const TOL_MSE_EXACT: f64 = 1e-8;
const TOL_MSE_SWEEP_REL: f64 = 1e-8;
const BUDGET_MSE_SWEEP: f64 = 1.0;
/// Criterion 2: pointwise characteristic against the displayed form.
const TOL_CHARACTERISTIC_ABS: f64 = 1e-6;
/// Criterion 3: geometric filter weights.
const TOL_WEIGHTS_ABS: f64 = 1e-8;
/// Criterion 4: two-term least-favorable radicals and stationarity.
const TOL_TWO_TERM: f64 = 1e-8;
const TOL_EIGEN_RESIDUAL: f64 = 1e-8;
/// Criterion 5: factorization round trip and outer kernel factor.
const TOL_ROUND_TRIP: f64 = 1e-8;
const TOL_OUTER_REL: f64 = 1e-6;
/// Criterion 6: quadrature error vs coefficient error.
const TOL_PARSEVAL: f64 = 1e-10;
/// Criterion 7: orthogonality to the observed past.
const TOL_ORTHOGONALITY: f64 = 1e-6;
/// Criterion 8: reversed-transfer modulus identity.
const TOL_REVERSAL: f64 = 1e-10;
/// Criterion 9: saddle inequalities.
const TOL_SADDLE: f64 = 1e-6;
const BUDGET_SADDLE_PER_CLASS: f64 = 60.0;
const SADDLE_PROBES: usize = 200;
/// Criterion 10: Monte Carlo z-scores.
const MC_TRIALS: usize = 2000;
const MC_Z_BOUND: f64 = 3.0;
const MC_DETUNED_Z: f64 = 2.0;
const BUDGET_MONTE_CARLO: f64 = 30.0;
/// Criterion 11: unbounded band vs power cap.
const TOL_BAND_REDUCTION: f64 = 1e-6;

fn check(ok: bool, line: &str, detail: String) {
    if ok {
        println!("[PASS] {line} ({detail})");
    } else {
        println!("[FAIL] {line} ({detail})");
        panic!("{line}: {detail}");
    }
}

fn grid(size: usize) -> FrequencyGrid {
    FrequencyGrid::new(size).unwrap()
}

fn spec(n: u32, mu: u32) -> IncrementSpec {
    IncrementSpec::new(n, mu).unwrap()
}

fn functional(coeffs: &[f64]) -> FunctionalCoefficients {
    FunctionalCoefficients::finite(coeffs.to_vec()).unwrap()
}

/// Closed-form error of the two-point functional `a xi(0) + b xi(1)` under
/// the integrated moving-average density with parameter `t`.
fn two_point_mse(a: f64, b: f64, t: f64) -> f64 {
    a * a + 2.0 * a * b * (1.0 + t) + b * b * (2.0 + 2.0 * t + t * t)
}

/// Closed-form characteristic of the same estimate at frequency `lambda`
/// for step `mu`.
fn two_point_characteristic(lambda: f64, a: f64, b: f64, t: f64, mu: u32) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let z = (-i * lambda).exp();
    let zi = (i * lambda).exp();
    let delta = if mu == 1 { 1.0 } else { 0.0 };
    let head = Complex64::new(a + delta * b, 0.0) + b * zi;
    let num = (1.0 - z) * (Complex64::new(a + b * (1.0 + t), 0.0) + b * zi);
    let den = (1.0 + t * z) * (1.0 - (-i * lambda * mu as f64).exp());
    head - num / den
}

/// Random minimum-phase polynomial with all roots outside `min_radius`.
fn random_min_phase_poly(rng: &mut ChaCha8Rng, max_degree: usize, min_radius: f64) -> Vec<f64> {
    let mut coeffs = vec![rng.gen_range(0.3..2.0)];
    let mut degree = 0;
    while degree < max_degree {
        let radius = rng.gen_range(min_radius..3.0);
        if degree + 2 <= max_degree && rng.gen_bool(0.5) {
            let angle = rng.gen_range(0.1..std::f64::consts::PI - 0.1);
            let quad = [1.0, -2.0 * angle.cos() / radius, 1.0 / (radius * radius)];
            coeffs = poly::conv(&coeffs, &quad);
            degree += 2;
        } else {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            coeffs = poly::conv(&coeffs, &[1.0, -sign / radius]);
            degree += 1;
        }
    }
    coeffs
}

#[test]
fn criterion_01_two_point_error_matches_closed_form() {
    let started = Instant::now();
    let g = grid(4096);
    let s = spec(1, 1);

    let f = integrated_ma1_density(&g, 0.5).unwrap();
    let a = functional(&[1.0, 1.0]);
    let est = estimate_functional_a_n(&a, &f, s, 1).unwrap();
    let exact_err = (est.mse() - 7.25).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_rel = 0.0_f64;
    for _ in 0..20 {
        let av = rng.gen_range(-0.9..0.9);
        let bv = rng.gen_range(-0.9..0.9);
        let t = rng.gen_range(-0.9..0.9);
        let f = integrated_ma1_density(&g, t).unwrap();
        let a = functional(&[av, bv]);
        let est = estimate_functional_a_n(&a, &f, s, 1).unwrap();
        let want = two_point_mse(av, bv, t);
        worst_rel = worst_rel.max((est.mse() - want).abs() / want);
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(
        exact_err <= TOL_MSE_EXACT && worst_rel <= TOL_MSE_SWEEP_REL && elapsed < BUDGET_MSE_SWEEP,
        "criterion 1: two-point functional error matches the closed form",
        format!("reference off by {exact_err:.2e}, sweep rel {worst_rel:.2e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_02_two_point_characteristic_matches_displayed_form() {
    let g = grid(4096);
    let f = integrated_ma1_density(&g, 0.5).unwrap();
    let a = functional(&[1.0, 1.0]);
    let mut worst = 0.0_f64;
    for mu in 1..=3u32 {
        let est = estimate_functional_a_n(&a, &f, spec(1, mu), 1).unwrap();
        for (j, &l) in g.nodes().iter().enumerate() {
            let want = two_point_characteristic(l, 1.0, 1.0, 0.5, mu);
            let got = est.characteristic().samples()[j];
            worst = worst.max((want - got).norm());
        }
    }
    check(
        worst <= TOL_CHARACTERISTIC_ABS,
        "criterion 2: two-point characteristic matches the displayed form pointwise",
        format!("max abs deviation {worst:.2e} over steps 1..3"),
    );
}

#[test]
fn criterion_03_geometric_filter_weights_recovered() {
    let g = grid(4096);
    let f = integrated_ma1_density(&g, 0.5).unwrap();
    let a = functional(&[1.0, 1.0]);
    let est = estimate_functional_a_n(&a, &f, spec(1, 1), 1).unwrap();
    let mut worst = 0.0_f64;
    for k in 1..=20usize {
        let want = (1.0 + 1.0) * 1.5 * (-0.5_f64).powi(k as i32 - 1);
        let (lag, got) = est.past_weights()[k - 1];
        assert_eq!(lag, -(k as i64));
        worst = worst.max((got - want).abs());
    }
    check(
        worst <= TOL_WEIGHTS_ABS,
        "criterion 3: geometric filter weights recovered",
        format!("max abs deviation {worst:.2e} over lags -1..-20"),
    );
}

#[test]
fn criterion_04_two_term_least_favorable_radicals_and_sign_rule() {
    let g = grid(4096);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let outer: Vec<(f64, f64)> = (1..=3u32)
        .map(|mu| {
            let w = outer_factor_full(spec(1, mu), &g).unwrap();
            (w.coeffs()[0], w.coeffs()[1])
        })
        .collect();
    let mut worst_coeff = 0.0_f64;
    let mut worst_resid = 0.0_f64;
    let mut signs_ok = true;
    for _ in 0..20 {
        let sa = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let sb = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let av = sa * rng.gen_range(0.2..2.0);
        let bv = sb * rng.gen_range(0.2..2.0);
        let mu = rng.gen_range(1..=3u32);
        let p0 = rng.gen_range(0.5..4.0);
        let s = spec(1, mu);
        let (w0, w1) = outer[(mu - 1) as usize];
        let closed = two_term_closed_form(av, bv, s, p0, w0, w1).unwrap();
        let a = functional(&[av, bv]);
        let got = least_favorable_power_cap_finite(&a, s, p0, &g, 1).unwrap();
        let phi = got.phi0().coeffs();
        let phi1 = phi.get(1).copied().unwrap_or(0.0);
        worst_coeff = worst_coeff
            .max((phi[0] - closed.phi[0]).abs())
            .max((phi1 - closed.phi[1]).abs());
        worst_resid = worst_resid.max(got.eigen_residual());
        signs_ok &= phi1.signum() == (closed.x * closed.y).signum();
    }
    check(
        worst_coeff <= TOL_TWO_TERM && worst_resid <= TOL_EIGEN_RESIDUAL && signs_ok,
        "criterion 4: two-term least-favorable radicals and sign rule",
        format!(
            "max coefficient deviation {worst_coeff:.2e}, max stationarity residual {worst_resid:.2e}, sign rule {}",
            if signs_ok { "holds" } else { "violated" }
        ),
    );
}

#[test]
fn criterion_05_factorization_round_trip_and_outer_factor() {
    let g = grid(4096);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_coeff = 0.0_f64;
    let mut worst_recon = 0.0_f64;
    for _ in 0..50 {
        let degree = rng.gen_range(1..=16usize);
        let mp = random_min_phase_poly(&mut rng, degree, 1.5);
        let vals = fourier::modulus_sq_causal(&mp, &g);
        let f = DensityGrid::new(g.clone(), vals.clone()).unwrap();
        let phi = canonical_factorization(&f, 64).unwrap();
        for k in 0..64 {
            let want = mp.get(k).copied().unwrap_or(0.0);
            worst_coeff = worst_coeff.max((phi.coeffs()[k] - want).abs());
        }
        let back = fourier::modulus_sq_causal(phi.coeffs(), &g);
        for (b, v) in back.iter().zip(vals.iter()) {
            worst_recon = worst_recon.max((b - v).abs() / (1.0 + v));
        }
    }
    let mut worst_outer = 0.0_f64;
    for n in 1..=2u32 {
        for mu in 1..=3u32 {
            let s = spec(n, mu);
            let w = outer_factor_full(s, &g).unwrap();
            let nodes = w.eval(&g);
            for (j, z) in nodes.iter().enumerate() {
                let lambda = g.node(j);
                if s.kernel_zero_distance(lambda) <= g.step() {
                    continue;
                }
                let want = s.kernel(lambda);
                worst_outer = worst_outer.max((z.norm_sqr() - want).abs() / want);
            }
        }
    }
    check(
        worst_coeff <= TOL_ROUND_TRIP && worst_recon <= TOL_ROUND_TRIP && worst_outer <= TOL_OUTER_REL,
        "criterion 5: factorization round-trip and outer kernel factor",
        format!(
            "coefficients off by {worst_coeff:.2e}, reconstruction {worst_recon:.2e}, outer factor rel {worst_outer:.2e}"
        ),
    );
}

#[test]
fn criterion_06_quadrature_error_matches_coefficient_error() {
    let g = grid(512);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let lb = rng.gen_range(1..=6);
        let b: Vec<f64> = (0..lb).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut phic = vec![1.0 + rng.gen_range(0.0..1.0)];
        for k in 1..5 {
            phic.push(rng.gen_range(-0.5..0.5) * 0.5_f64.powi(k));
        }
        let phi = CanonicalFactor::new(phic.clone()).unwrap();
        let r: Vec<f64> = (0..b.len())
            .map(|j| {
                let m_max = (b.len() - j).min(phic.len());
                (0..m_max).map(|m| b[m + j] * phic[m]).sum()
            })
            .collect();
        let quad = g.mean(
            &fourier::eval_anticausal(&r, &g)
                .iter()
                .map(|z| z.norm_sqr())
                .collect::<Vec<_>>(),
        );
        let coeff = mse_b(&b, &phi);
        worst = worst.max((quad - coeff).abs() / (1.0 + coeff));
    }
    check(
        worst <= TOL_PARSEVAL,
        "criterion 6: quadrature and coefficient error norms agree",
        format!("max deviation {worst:.2e} over 100 instances"),
    );
}

#[test]
fn criterion_07_error_orthogonal_to_observed_past() {
    let g = grid(4096);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=2u32);
        let mu = rng.gen_range(1..=3u32);
        let s = spec(n, mu);
        let head = 1.0 + rng.gen_range(0.0..1.0);
        let c1 = rng.gen_range(-0.3..0.3);
        let c2 = rng.gen_range(-0.2..0.2);
        let vals: Vec<f64> = fourier::modulus_sq_causal(&[head, c1, c2], &g)
            .iter()
            .map(|x| x + 0.05)
            .collect();
        let f = DensityGrid::new(g.clone(), vals).unwrap();
        let la = rng.gen_range(1..=4);
        let coeffs: Vec<f64> = (0..la).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = functional(&coeffs);
        let est = estimate_functional_a(&a, &f, s).unwrap();
        let phi = increment_density_factor(&f, s, g.size() / 2).unwrap();
        worst = worst.max(est.characteristic().causality_residual(&phi, 10));
    }
    check(
        worst <= TOL_ORTHOGONALITY,
        "criterion 7: estimation error orthogonal to the observed past",
        format!("max residual {worst:.2e} over lags -1..-10, 20 instances"),
    );
}

#[test]
fn criterion_08_reversed_transfer_modulus_identity() {
    let g = grid(512);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=2u32);
        let mu = rng.gen_range(1..=3u32);
        let n_cap = rng.gen_range(1..=8usize);
        let s = spec(n, mu);
        let coeffs: Vec<f64> = (0..=n_cap).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = functional(&coeffs);
        let am = build_a_n(&a, n_cap);
        let dm = build_d_n(s, n_cap);
        let dhat = build_d_hat_n(s, n_cap);
        let wm = build_w_n(s, &g, n_cap).unwrap();
        let phi: Vec<f64> = (0..=n_cap).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = am.apply(&wm.apply(&phi));
        let r = dm.apply(&base);
        let r_hat = dhat.apply(&base);
        for &l in g.nodes().iter().step_by(17) {
            let fwd: Complex64 = r
                .iter()
                .enumerate()
                .map(|(j, &c)| c * Complex64::from_polar(1.0, l * j as f64))
                .sum();
            let rev: Complex64 = r_hat
                .iter()
                .enumerate()
                .map(|(j, &c)| c * Complex64::from_polar(1.0, -l * j as f64))
                .sum();
            worst = worst.max((fwd.norm() - rev.norm()).abs());
        }
    }
    check(
        worst <= TOL_REVERSAL,
        "criterion 8: reversed-transfer modulus identity",
        format!("max modulus deviation {worst:.2e} over 100 instances"),
    );
}

#[test]
fn criterion_09_saddle_inequalities_across_the_four_classes() {
    let g = grid(4096);
    let base: Vec<f64> = g.nodes().iter().map(|l| 1.0 + 0.5 * l.cos()).collect();
    let mut lines = Vec::new();
    let mut all_ok = true;

    let run = |label: &str,
               class: &DensityClassSpec,
               a: &FunctionalCoefficients,
               s: IncrementSpec,
               window: Option<usize>,
               lines: &mut Vec<String>,
               all_ok: &mut bool| {
        let started = Instant::now();
        let result = least_favorable(class, a, s, &g, window).unwrap();
        let report = saddle_check(&result, class, s, SADDLE_PROBES, 909);
        let elapsed = started.elapsed().as_secs_f64();
        let ok = report.right_violation() <= TOL_SADDLE
            && report.negative_control_flagged()
            && elapsed < BUDGET_SADDLE_PER_CLASS;
        *all_ok &= ok;
        lines.push(format!(
            "{label}: worst probe excess {:.2e}, control {}, {:.1} s",
            report.right_violation(),
            if report.negative_control_flagged() {
                "flagged"
            } else {
                "missed"
            },
            elapsed
        ));
    };

    run(
        "power-cap",
        &DensityClassSpec::PowerCap { p0: 1.8 },
        &functional(&[1.0, 0.7, -0.4, 0.2]),
        spec(1, 2),
        Some(3),
        &mut lines,
        &mut all_ok,
    );
    run(
        "moments",
        &DensityClassSpec::Moments {
            rho: vec![1.3, 0.5, 0.2, 0.08],
        },
        &functional(&[1.0, 0.6, 0.3]),
        spec(1, 1),
        Some(2),
        &mut lines,
        &mut all_ok,
    );
    let v_band = DensityGrid::new(g.clone(), base.iter().map(|x| 0.5 * x).collect()).unwrap();
    let u_band = DensityGrid::new(g.clone(), base.iter().map(|x| 2.0 * x + 0.5).collect()).unwrap();
    run(
        "band",
        &DensityClassSpec::Band {
            v: v_band,
            u: u_band,
            p0: 1.0,
        },
        &functional(&[1.0, -0.5]),
        spec(1, 1),
        None,
        &mut lines,
        &mut all_ok,
    );
    let v_nbhd = DensityGrid::new(g.clone(), base.clone()).unwrap();
    run(
        "neighborhood",
        &DensityClassSpec::Neighborhood {
            v: v_nbhd,
            epsilon: 0.4,
        },
        &functional(&[0.8, 0.4]),
        spec(1, 1),
        None,
        &mut lines,
        &mut all_ok,
    );

    check(
        all_ok,
        "criterion 9: saddle inequalities across the four classes",
        lines.join("; "),
    );
}

#[test]
fn criterion_10_empirical_error_validation() {
    let started = Instant::now();
    let g = grid(1024);
    let s = spec(1, 1);
    let f = integrated_ma1_density(&g, 0.5).unwrap();
    let a = functional(&[1.0, 1.0]);
    let est_fun = estimate_functional_a(&a, &f, s).unwrap();
    let phi = CanonicalFactor::new(vec![1.0, 0.5]).unwrap();

    let cfg = SimulationConfig::new(s, phi.clone(), 640, MC_TRIALS, 1010).unwrap();
    let chi = simulate_increments(&cfg);
    let paths = integrate_to_sequence(&chi, s, &[0.0]).unwrap();

    let mut zs = Vec::new();
    let fun_report = empirical_mse(&est_fun, &paths, s, &SimulationTarget::Functional { a: &a })
        .unwrap();
    zs.push(("functional", fun_report.z()));
    for m in 0..=2usize {
        let est = predict_increment(m, s, &phi, &g).unwrap();
        let report = empirical_mse(&est, &paths, s, &SimulationTarget::Increment { m }).unwrap();
        zs.push(("increment", report.z()));
    }
    let worst_z = zs.iter().map(|(_, z)| z.abs()).fold(0.0, f64::max);
    let detuned = detuned_excess(
        &est_fun,
        &paths,
        s,
        &SimulationTarget::Functional { a: &a },
        1.1,
    )
    .unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    check(
        worst_z <= MC_Z_BOUND && detuned.z() >= MC_DETUNED_Z && elapsed < BUDGET_MONTE_CARLO,
        "criterion 10: empirical error validation",
        format!(
            "max |z| {worst_z:.2} over {} targets at {} trials, detuned control z {:.1}, {elapsed:.1} s",
            zs.len(),
            MC_TRIALS,
            detuned.z()
        ),
    );
}

#[test]
fn criterion_11_unbounded_band_reduces_to_power_cap() {
    let g = grid(4096);
    let s = spec(1, 1);
    let a = functional(&[1.0, 0.6]);
    let p0 = 2.0;
    let cap = least_favorable_power_cap_infinite(&a, s, p0, &g, 48).unwrap();
    let zeros = DensityGrid::new(g.clone(), vec![0.0; g.size()]).unwrap();
    let unbounded = DensityGrid::new(g.clone(), vec![f64::INFINITY; g.size()]).unwrap();
    let band = least_favorable_band(&a, s, &zeros, &unbounded, p0, &g).unwrap();
    let sup = cap
        .f0()
        .values()
        .iter()
        .zip(band.f0().values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    check(
        sup <= TOL_BAND_REDUCTION,
        "criterion 11: unbounded band reduces to the power cap",
        format!(
            "sup-norm gap {sup:.2e} between branches {} and {}",
            cap.branch(),
            band.branch()
        ),
    );
}
