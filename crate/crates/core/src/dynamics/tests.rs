use super::*;
use crate::bath::BathSpec;
use crate::spectra::ho_spectrum;
use approx::assert_abs_diff_eq;

fn ho15() -> SystemSpectrum {
    ho_spectrum(1.0, 1.0, 15).unwrap()
}

fn uniform(n: usize) -> InitialState {
    initial_state(InitialKind::UniformEntangled, n).unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn integrator_config_validation() {
    assert!(IntegratorConfig::new(0.01, 500.0, 10).is_ok());
    assert!(IntegratorConfig::new(0.0, 1.0, 1).is_err());
    assert!(IntegratorConfig::new(0.01, 1.0, 0).is_err());
    assert!(IntegratorConfig::new(0.03, 1.0, 1).is_err());
    let cfg = IntegratorConfig::new(0.5, 10.0, 4).unwrap();
    assert_eq!(cfg.n_steps(), 20);
    assert_eq!(cfg.sample_times(), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
}

#[test]
fn uniform_state_coefficients() {
    let s = uniform(15);
    for c in s.coefficients() {
        assert_abs_diff_eq!(c.re, 0.2581989, epsilon = 1e-7);
        assert_eq!(c.im, 0.0);
    }
    let norm: f64 = s.coefficients().iter().map(|c| c.norm_sqr()).sum();
    assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
}

#[test]
fn gaussian_packet_shape() {
    let s = initial_state(InitialKind::morse_packet(), 38).unwrap();
    let c = s.coefficients();
    let norm: f64 = c.iter().map(|c| c.norm_sqr()).sum();
    assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
    let argmax = (0..38).max_by(|&a, &b| c[a].re.total_cmp(&c[b].re)).unwrap();
    assert_eq!(argmax + 1, 16);
    for n in 1..=38 {
        let inside = (9..=23).contains(&n);
        assert_eq!(c[n - 1].re > 0.0, inside, "level {n}");
    }
    // symmetric about level 16 inside the window
    for k in 1..=7 {
        assert_abs_diff_eq!(c[15 - k].re, c[15 + k].re, epsilon = 1e-15);
    }
    // ratio of neighbours follows exp(-((n-16)² - (n-15)²)/9)
    assert_abs_diff_eq!(c[16].re / c[15].re, (-1.0f64 / 9.0).exp(), epsilon = 1e-14);
    assert!(initial_state(
        InitialKind::GaussianPacket { center: 16.0, sigma: 3.0, window: (9, 40) },
        38
    )
    .is_err());
}

#[test]
fn free_evolution_is_exact_phase() {
    let spec = ho15();
    let init = uniform(15);
    let bath = BathSpec::empty();
    let noise = NoiseRealization::draw(0, 1, 0);
    let cfg = IntegratorConfig::new(0.01, 50.0, 500).unwrap();
    let series = integrate_trajectory(&init, &bath, &spec, &noise, &cfg).unwrap();
    for st in &series.states {
        for (n, c) in st.c.iter().enumerate() {
            let expect = init.coefficients()[n] * Complex64::from_polar(1.0, -spec.energies()[n] * st.t);
            assert!((c - expect).norm() < 1e-12);
        }
        assert_abs_diff_eq!(st.norm_sqr(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn trajectories_are_linear_in_the_initial_state() {
    let spec = ho15();
    let bath = BathSpec::sampled(5, 1.0, (1.1, 2.1), 0.05, 7).unwrap();
    let noise = NoiseRealization::draw(5, 3, 2);
    let cfg = IntegratorConfig::new(0.01, 20.0, 100).unwrap();
    let a = uniform(15);
    let mut raw = vec![Complex64::new(0.0, 0.0); 15];
    raw[3] = Complex64::new(0.6, 0.0);
    raw[7] = Complex64::new(0.0, 0.8);
    let b = InitialState::from_coefficients(InitialKind::UniformEntangled, raw).unwrap();
    let (alpha, beta) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
    let combo: Vec<Complex64> = a
        .coefficients()
        .iter()
        .zip(b.coefficients())
        .map(|(x, y)| alpha * x + beta * y)
        .collect();
    let combo = InitialState { kind: a.kind, coefficients: combo };
    let ta = integrate_trajectory(&a, &bath, &spec, &noise, &cfg).unwrap();
    let tb = integrate_trajectory(&b, &bath, &spec, &noise, &cfg).unwrap();
    let tc = integrate_trajectory(&combo, &bath, &spec, &noise, &cfg).unwrap();
    for k in 0..tc.states.len() {
        let expect: Vec<Complex64> = ta.states[k]
            .c
            .iter()
            .zip(&tb.states[k].c)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        assert!(max_diff(&tc.states[k].c, &expect) < 1e-12);
    }
    let scaled = integrate_trajectory(&a.scaled(alpha), &bath, &spec, &noise, &cfg).unwrap();
    let expect: Vec<Complex64> = ta.last().c.iter().map(|x| alpha * x).collect();
    assert!(max_diff(&scaled.last().c, &expect) < 1e-12);
}

#[test]
fn propagator_generator_matches_direct_derivative() {
    let spec = ho15();
    let bath = BathSpec::sampled(7, 0.5, (1.1, 2.1), 0.03, 11).unwrap();
    let noise = NoiseRealization::draw(7, 5, 1);
    let cfg = IntegratorConfig::new(0.01, 1.0, 1).unwrap();
    let prop = Propagator::new(&spec, &bath, cfg).unwrap();
    let c: Vec<Complex64> = (0..15)
        .map(|n| Complex64::new((n as f64 * 0.37).cos(), (n as f64 * 0.11).sin()))
        .collect();
    for t in [0.0, 0.3, 7.25, 123.4] {
        let state = TrajectoryState { t, c: c.clone() };
        let direct = derivative(&state, &bath, &spec, &noise, t);
        let fast = prop.lab_rhs(&noise, &c, t);
        assert!(max_diff(&direct, &fast) < 1e-11, "t = {t}");
    }
}

#[test]
fn derivative_without_bath_is_free() {
    let spec = ho15();
    let c: Vec<Complex64> = (0..15).map(|n| Complex64::new(1.0, n as f64)).collect();
    let d = derivative(
        &TrajectoryState { t: 3.0, c: c.clone() },
        &BathSpec::empty(),
        &spec,
        &NoiseRealization::draw(0, 0, 0),
        3.0,
    );
    for n in 0..15 {
        assert_eq!(d[n], -I * spec.energies()[n] * c[n]);
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let spec = ho15();
    let bath = BathSpec::sampled(5, 1.0, (1.1, 2.1), 0.1, 4).unwrap();
    let noise = NoiseRealization::draw(5, 9, 0);
    let init = uniform(15);
    let run = |dt: f64| {
        let cfg = IntegratorConfig::new(dt, 20.0, (20.0 / dt).round() as usize).unwrap();
        integrate_trajectory(&init, &bath, &spec, &noise, &cfg).unwrap().last().c.clone()
    };
    let (a, b, c) = (run(0.2), run(0.1), run(0.05));
    let order = (max_diff(&a, &b) / max_diff(&b, &c)).log2();
    assert!((3.7..=4.3).contains(&order), "order {order}");
}

#[test]
fn reruns_are_bit_identical() {
    let spec = ho15();
    let bath = BathSpec::sampled(10, 1.0, (1.1, 2.1), 0.01, 1).unwrap();
    let noise = NoiseRealization::draw(10, 42, 17);
    let cfg = IntegratorConfig::new(0.01, 10.0, 50).unwrap();
    let a = integrate_trajectory(&uniform(15), &bath, &spec, &noise, &cfg).unwrap();
    let b = integrate_trajectory(&uniform(15), &bath, &spec, &noise, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn overflow_is_reported() {
    let spec = ho15();
    let bath = BathSpec::sampled(3, 1.0, (1.1, 2.1), 30.0, 1).unwrap();
    let noise = NoiseRealization::draw(3, 1, 0);
    let cfg = IntegratorConfig::new(0.01, 50.0, 10).unwrap();
    match integrate_trajectory(&uniform(15), &bath, &spec, &noise, &cfg) {
        Err(Error::Overflow { realization, magnitude, .. }) => {
            assert_eq!(realization, 0);
            assert!(magnitude > OVERFLOW_LIMIT);
        }
        other => panic!("expected overflow, got {:?}", other.map(|s| s.states.len())),
    }
}

#[test]
fn exact_reference_without_bath_conserves_energy() {
    let spec = ho15();
    let cfg = IntegratorConfig::new(0.01, 10.0, 100).unwrap();
    let obs = exact_small_bath_reference(&uniform(15), &BathSpec::empty(), &spec, 4, &cfg).unwrap();
    for e in &obs.energy {
        assert_abs_diff_eq!(*e, 7.5, epsilon = 1e-12);
    }
    for p in &obs.purity {
        assert_abs_diff_eq!(*p, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn exact_reference_conserves_total_norm() {
    let spec = ho_spectrum(1.0, 1.0, 6).unwrap();
    let bath = BathSpec::with_frequencies(vec![1.3, 1.9], 0.05).unwrap();
    let cfg = IntegratorConfig::new(0.02, 20.0, 100).unwrap();
    let obs = exact_small_bath_reference(&uniform(6), &bath, &spec, 5, &cfg).unwrap();
    // the reduced trace stays 1 for unitary dynamics
    for tr in &obs.trace {
        assert_abs_diff_eq!(*tr, 1.0, epsilon = 1e-9);
    }
    assert!(*obs.purity.last().unwrap() < 1.0);
    let three = BathSpec::with_frequencies(vec![1.3, 1.5, 1.9], 0.05).unwrap();
    assert!(exact_small_bath_reference(&uniform(6), &three, &spec, 5, &cfg).is_err());
}
