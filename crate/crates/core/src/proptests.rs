//! Property tests that cut across modules.

use nalgebra::DMatrix;
use proptest::prelude::*;

use crate::bath::{counterterm, kernel, memory_factor, noise_value, MemoryTable, THETA_TOL};
use crate::config::{parse_config, ExperimentConfig};
use crate::dynamics::{initial_state, integrate_trajectory, InitialKind, InitialState};
use crate::ensemble::purity;
use crate::fitting::{detect_regimes, fit_exponential, fit_powerlaw, FitModel};
use crate::linalg::simpson;
use crate::spectra::ho_spectrum;
use crate::{BathSpec, Complex64, IntegratorConfig, NoiseRealization};

fn cvec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_frequencies_stay_in_window(
        n in 0usize..200,
        s in 0.0..=2.0f64,
        lo in 0.1..3.0f64,
        width in 0.01..3.0f64,
        seed in any::<u64>(),
    ) {
        let a = BathSpec::sampled(n, s, (lo, lo + width), 0.01, seed).unwrap();
        let b = BathSpec::sampled(n, s, (lo, lo + width), 0.01, seed).unwrap();
        prop_assert_eq!(a.frequencies(), b.frequencies());
        prop_assert_eq!(a.len(), n);
        for w in a.frequencies() {
            prop_assert!(*w >= lo && *w <= lo + width);
        }
    }

    #[test]
    fn kernel_is_hermitian_in_time_and_bounded(
        freqs in prop::collection::vec(0.5..3.0f64, 1..20),
        g in 1e-3..0.5f64,
        tau in -300.0..300.0f64,
    ) {
        let bath = BathSpec::with_frequencies(freqs.clone(), g).unwrap();
        let k0 = kernel(&bath, 0.0);
        prop_assert!((k0.re - g * g * freqs.len() as f64).abs() < 1e-12);
        prop_assert!((kernel(&bath, -tau) - kernel(&bath, tau).conj()).norm() < 1e-12);
        prop_assert!(kernel(&bath, tau).norm() <= k0.re + 1e-12);
        // A(t) is non-positive and vanishes at t = 0
        prop_assert!(counterterm(&bath, tau) <= 1e-15);
        prop_assert_eq!(counterterm(&bath, 0.0), 0.0);
    }

    #[test]
    fn memory_factor_is_the_integral_of_the_phase(theta in -3.0..3.0f64, t in 0.0..40.0f64) {
        let f = memory_factor(theta, t);
        // conjugation flips θ, and |∫ e^{-iθs} ds| ≤ t
        prop_assert!((memory_factor(-theta, t) - f.conj()).norm() < 1e-12);
        prop_assert!(f.norm() <= t * (1.0 + 1e-12));
        let n = 4000;
        let h = t / n as f64;
        let re: Vec<f64> = (0..=n).map(|k| (theta * k as f64 * h).cos()).collect();
        let im: Vec<f64> = (0..=n).map(|k| -(theta * k as f64 * h).sin()).collect();
        let quad = Complex64::new(simpson(&re, h), simpson(&im, h));
        prop_assert!((f - quad).norm() < 1e-9 * (1.0 + t), "{} vs {}", f, quad);
    }

    #[test]
    fn memory_factor_is_continuous_across_the_series_switch(t in 0.0..500.0f64, k in 0.5..2.0f64) {
        let below = memory_factor(THETA_TOL * (1.0 - 1e-9) * k.min(1.0), t);
        let above = memory_factor(THETA_TOL * (1.0 + 1e-9) * k.max(1.0), t);
        // the two θ values differ by at most a factor 2 around 1e-6; the
        // function moves by at most |Δθ| t² / 2 between them
        let bound = (THETA_TOL * 2.0) * t * t + 1e-12;
        prop_assert!((below - above).norm() <= bound);
    }

    #[test]
    fn cached_memory_operator_matches_closed_form(
        freqs in prop::collection::vec(0.5..3.0f64, 1..8),
        t in 0.0..200.0f64,
    ) {
        let spec = ho_spectrum(1.0, 1.0, 6).unwrap();
        let bath = BathSpec::with_frequencies(freqs, 0.05).unwrap();
        let table = MemoryTable::new(&bath, &spec);
        for m in 0..6 {
            for mp in 0..6 {
                let direct = crate::bath::obar_element(&bath, &spec, m, mp, t);
                prop_assert!((table.obar_element(m, mp, t) - direct).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn exponential_fit_is_scale_and_shift_equivariant(
        alpha in -0.1..0.1f64,
        amp in 1e-3..1e3f64,
        scale in 1e-3..1e3f64,
        shift in -50.0..50.0f64,
    ) {
        let t: Vec<f64> = (0..60).map(|k| k as f64 * 0.7).collect();
        let y: Vec<f64> = t.iter().map(|t| amp * (-alpha * t).exp() * (1.0 + 0.01 * (3.0 * t).sin())).collect();
        let base = fit_exponential(&t, &y, (0.0, 100.0)).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let scaled = fit_exponential(&t, &ys, (0.0, 100.0)).unwrap();
        prop_assert!((scaled.exponent - base.exponent).abs() < 1e-10);
        prop_assert!((scaled.prefactor / base.prefactor / scale - 1.0).abs() < 1e-10);
        prop_assert!((scaled.sse - base.sse).abs() < 1e-10);
        let ts: Vec<f64> = t.iter().map(|t| t + shift).collect();
        let shifted = fit_exponential(&ts, &y, (shift - 1.0, shift + 100.0)).unwrap();
        prop_assert!((shifted.exponent - base.exponent).abs() < 1e-9);
    }

    #[test]
    fn powerlaw_fit_recovers_exact_laws(beta in -2.0..3.0f64, amp in 1e-2..1e2f64, t0 in 0.5..10.0f64) {
        let t: Vec<f64> = (0..50).map(|k| t0 + k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| amp * t.powf(-beta)).collect();
        let f = fit_powerlaw(&t, &y, (t0, t0 + 49.0)).unwrap();
        prop_assert!((f.exponent - beta).abs() < 1e-9);
        prop_assert!((f.prefactor / amp - 1.0).abs() < 1e-9);
        prop_assert!(f.sse < 1e-20);
    }

    #[test]
    fn segmentations_tile_the_series(
        a1 in 0.005..0.05f64,
        b in 0.2..1.5f64,
        split in 60.0..140.0f64,
        max in 1usize..=3,
    ) {
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.5).collect();
        let ys = (-a1 * split).exp();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| if t <= split { (-a1 * t).exp() } else { ys * (t / split).powf(-b) })
            .collect();
        let seq = [FitModel::Exponential, FitModel::Exponential, FitModel::PowerLaw];
        let seg = detect_regimes(&t, &y, max, &seq).unwrap();
        prop_assert!(!seg.segments.is_empty() && seg.segments.len() <= max);
        prop_assert_eq!(seg.breakpoints.len() + 1, seg.segments.len());
        prop_assert_eq!(seg.single_regime, seg.segments.len() == 1);
        prop_assert_eq!(seg.segments[0].window.0, 0.0);
        for w in seg.segments.windows(2) {
            prop_assert!(w[0].window.1 < w[1].window.0);
        }
        for (bp, s) in seg.breakpoints.iter().zip(&seg.segments[1..]) {
            prop_assert_eq!(*bp, s.window.0);
        }
        // the last model of the sequence always closes a multi-segment fit
        if seg.segments.len() > 1 {
            prop_assert_eq!(seg.segments.last().unwrap().model, FitModel::PowerLaw);
        }
    }

    #[test]
    fn purity_never_exceeds_squared_trace(vs in prop::collection::vec(cvec(5), 1..6)) {
        let mut rho = DMatrix::<Complex64>::zeros(5, 5);
        for v in &vs {
            for n in 0..5 {
                for m in 0..5 {
                    rho[(n, m)] += v[n] * v[m].conj();
                }
            }
        }
        let tr: f64 = (0..5).map(|n| rho[(n, n)].re).sum();
        let p = purity(&rho);
        prop_assert!(p >= 0.0);
        prop_assert!(p <= tr * tr * (1.0 + 1e-12));
        if vs.len() == 1 {
            prop_assert!((p - tr * tr).abs() <= 1e-12 * tr * tr);
        }
    }

    #[test]
    fn config_round_trips(
        morse in any::<bool>(),
        n in 0usize..60,
        s in 0.0..=2.0f64,
        g in 1e-4..0.1f64,
        seed in any::<u64>(),
        reps in 1usize..1000,
        stride in 1usize..20,
    ) {
        let mut cfg = if morse { ExperimentConfig::morse_default() } else { ExperimentConfig::harmonic_default() };
        cfg.bath.n_oscillators = n;
        cfg.bath.spectral_exponent = s;
        cfg.bath.coupling = g;
        cfg.bath.frequency_seed = seed;
        cfg.ensemble.n_realizations = reps;
        cfg.ensemble.master_seed = seed.wrapping_mul(3);
        cfg.integrator.sample_stride = stride;
        let back = parse_config(&cfg.serialize()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trajectories_are_linear(a in cvec(8), b in cvec(8), seed in 0u64..1000, re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let spec = ho_spectrum(1.0, 1.0, 8).unwrap();
        let bath = BathSpec::sampled(4, 1.0, (1.1, 2.1), 0.05, seed).unwrap();
        let noise = NoiseRealization::draw(4, seed, 0);
        let cfg = IntegratorConfig::new(0.02, 4.0, 50).unwrap();
        let k = Complex64::new(re, im);
        let state = |c: Vec<Complex64>| InitialState { kind: InitialKind::UniformEntangled, coefficients: c };
        let combo: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + k * y).collect();
        let ta = integrate_trajectory(&state(a), &bath, &spec, &noise, &cfg).unwrap();
        let tb = integrate_trajectory(&state(b), &bath, &spec, &noise, &cfg).unwrap();
        let tc = integrate_trajectory(&state(combo), &bath, &spec, &noise, &cfg).unwrap();
        for ((sa, sb), sc) in ta.states.iter().zip(&tb.states).zip(&tc.states) {
            for n in 0..8 {
                prop_assert!((sc.c[n] - (sa.c[n] + k * sb.c[n])).norm() < 1e-11);
            }
        }
    }
}

#[test]
fn noise_correlation_reproduces_the_kernel() {
    // E[z*_t z_s] = conj K(t - s); the Monte Carlo error must sit within a few
    // standard errors of the exact kernel
    let bath = BathSpec::with_frequencies(vec![1.2, 1.55, 2.0], 0.3).unwrap();
    let m = 20000;
    let pairs = [(0.0, 0.0), (3.0, 1.0), (10.0, 2.5), (7.3, 11.9)];
    for (t, s) in pairs {
        let samples: Vec<Complex64> = (0..m as u64)
            .map(|k| {
                let noise = NoiseRealization::draw(3, 17, k);
                noise_value(&noise, &bath, t) * noise_value(&noise, &bath, s).conj()
            })
            .collect();
        let mean = samples.iter().sum::<Complex64>() / m as f64;
        let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        let exact = kernel(&bath, t - s).conj();
        assert!((mean - exact).norm() < 5.0 * se, "t={t} s={s}: {mean} vs {exact} (se {se})");
    }
    // mean of the noise itself vanishes
    let mean = (0..m as u64)
        .map(|k| noise_value(&NoiseRealization::draw(3, 17, k), &bath, 1.0))
        .sum::<Complex64>()
        / m as f64;
    assert!(mean.norm() < 5.0 * (kernel(&bath, 0.0).re / m as f64).sqrt());
}

#[test]
fn ensemble_error_shrinks_like_inverse_root() {
    // weak coupling keeps the per-trajectory energies close to Gaussian; at
    // strong coupling the linear norms are heavy-tailed and small-sample
    // variances are unreliable
    use crate::ensemble::run_ensemble;
    use crate::EnsembleConfig;
    let spec = ho_spectrum(1.0, 1.0, 6).unwrap();
    let bath = BathSpec::sampled(3, 1.0, (1.1, 2.1), 0.03, 1).unwrap();
    let init = initial_state(InitialKind::UniformEntangled, 6).unwrap();
    let cfg = IntegratorConfig::new(0.02, 5.0, 250).unwrap();
    let se = |n: usize| {
        let ens = EnsembleConfig { n_realizations: n, master_seed: 5, parallel_degree: None };
        let (obs, _) = run_ensemble(&init, &bath, &spec, &cfg, &ens).unwrap();
        *obs.energy_stderr.last().unwrap()
    };
    let ratio = se(100) / se(1600);
    assert!((2.8..=5.6).contains(&ratio), "stderr ratio {ratio}");
}
