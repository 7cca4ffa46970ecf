mod common;

use mixdp_core::accountant::{
    calibrate_steps, compose_gaussian, epsilon_of_mu, gaussian_delta, gdp_of_rho, noisygd_rho,
    DpPoint, GdpParam, MechanismStep,
};
use proptest::prelude::*;

use common::{delta_quad, scan_calibrate};

fn mu(v: f64) -> GdpParam {
    GdpParam::new(v).unwrap()
}

#[test]
fn delta_examples_against_quadrature() {
    assert_eq!(gaussian_delta(mu(0.0), 1.0).unwrap(), 0.0);
    let d0 = gaussian_delta(mu(1.0), 0.0).unwrap();
    assert!((d0 - 0.3829249226).abs() < 1e-10);
    assert!((d0 - delta_quad(1.0, 0.0)).abs() < 1e-13);
    let d1 = gaussian_delta(mu(1.0), 1.0).unwrap();
    assert!((d1 - 0.126936737).abs() < 1e-9);
    assert!((d1 - delta_quad(1.0, 1.0)).abs() < 1e-13);
}

#[test]
fn delta_strictly_decreasing_in_epsilon() {
    for i in 1..=30 {
        let m = i as f64 * 0.2;
        let mut prev = gaussian_delta(mu(m), 0.0).unwrap();
        for j in 1..=60 {
            let d = gaussian_delta(mu(m), j as f64 * 0.05).unwrap();
            assert!(d < prev || (d == 0.0 && prev == 0.0), "mu {m}, step {j}");
            prev = d;
        }
    }
}

#[test]
fn epsilon_of_mu_inverts_delta() {
    let d = gaussian_delta(mu(0.8), 1.3).unwrap();
    assert!((epsilon_of_mu(mu(0.8), d).unwrap() - 1.3).abs() < 1e-9);
    let e = epsilon_of_mu(mu(0.5), 1e-5).unwrap();
    assert!(e > 0.0 && e.is_finite());
    assert!((gaussian_delta(mu(0.5), e).unwrap() - 1e-5).abs() < 1e-11);
    assert!((epsilon_of_mu(mu(1.0), 0.126936737).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn composition_examples() {
    assert_eq!(compose_gaussian(&[]).mu(), 0.0);
    let steps = vec![MechanismStep::new(1.0, 20.0).unwrap(); 100];
    assert!((compose_gaussian(&steps).mu() - 0.5).abs() < 1e-15);
    let mixed: Vec<_> = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]
        .iter()
        .map(|&(d, s)| MechanismStep::new(d, s).unwrap())
        .collect();
    assert!((compose_gaussian(&mixed).mu() - 3f64.sqrt()).abs() < 1e-15);
    let rho = noisygd_rho(4, 2.0, 2.0).unwrap();
    assert_eq!(rho.rho(), 2.0);
    assert_eq!(gdp_of_rho(rho).mu(), 2.0);
}

#[test]
fn calibration_scales_with_noise() {
    for &(eps, delta) in &[(3.0, 1e-5), (1.0, 1e-6), (0.5, 1e-3)] {
        let point = DpPoint::new(eps, delta).unwrap();
        let t1 = calibrate_steps(point, 1.0, 10.0).unwrap() as i64;
        let t2 = calibrate_steps(point, 1.0, 20.0).unwrap() as i64;
        assert!((t2 - 4 * t1).abs() <= 3, "({eps}, {delta}): {t1} vs {t2}");
        assert_eq!(t1 as u64, scan_calibrate(eps, delta, 1.0, 10.0));
    }
}

#[test]
fn calibration_rejects_bad_inputs() {
    let point = DpPoint::new(1.0, 1e-5).unwrap();
    assert!(calibrate_steps(point, 0.0, 1.0).is_err());
    assert!(calibrate_steps(point, 1.0, 0.0).is_err());
    assert!(calibrate_steps(DpPoint::new(1.0, 0.0).unwrap(), 1.0, 1.0).is_err());
    assert!(DpPoint::new(1.0, 1.5).is_err());
    assert!(DpPoint::new(-1.0, 1e-5).is_err());
}

proptest! {
    #[test]
    fn calibrated_steps_bracket_the_target(
        eps in 0.1f64..8.0,
        log_delta in -10.0f64..-2.0,
        noise in 1.0f64..40.0,
    ) {
        let delta = 10f64.powf(log_delta);
        let t = calibrate_steps(DpPoint::new(eps, delta).unwrap(), 1.0, noise).unwrap();
        let d = |k: u64| gaussian_delta(mu((k as f64).sqrt() / noise), eps).unwrap();
        if t > 0 {
            prop_assert!(d(t) <= delta);
        }
        prop_assert!(d(t + 1) > delta);
    }

    #[test]
    fn composition_equals_rho_route(t in 1u64..3000, sens in 0.1f64..5.0, noise in 0.1f64..50.0) {
        let steps = vec![MechanismStep::new(sens, noise).unwrap(); t as usize];
        let a = compose_gaussian(&steps).mu();
        let b = gdp_of_rho(noisygd_rho(t, sens, noise).unwrap()).mu();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn epsilon_round_trip(m in 0.05f64..5.0, eps in 0.0f64..6.0) {
        let d = gaussian_delta(mu(m), eps).unwrap();
        prop_assume!(d > 1e-12 && d < gaussian_delta(mu(m), 0.0).unwrap());
        let back = epsilon_of_mu(mu(m), d).unwrap();
        prop_assert!((gaussian_delta(mu(m), back).unwrap() - d).abs() <= 1e-12 + 1e-9 * d);
    }
}
