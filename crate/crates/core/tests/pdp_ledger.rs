use std::sync::Arc;

use mixdp_core::accountant::{epsilon_of_mu, DpPoint, GdpParam};
use mixdp_core::optimizer::{adamix_theoretical, AdaMixConfig};
use mixdp_core::pdp_ledger::PdpLedger;
use mixdp_core::problems::{make_synthetic, Link, SyntheticSpec};
use proptest::prelude::*;

#[test]
fn fresh_and_zero_steps() {
    let mut l = PdpLedger::new(4);
    assert_eq!(l.per_example_mu(), vec![0.0; 4]);
    l.record_step(&[0.0; 4], 0.2).unwrap();
    assert_eq!(l.per_example_mu(), vec![0.0; 4]);
    assert_eq!(l.steps(), 1);
    assert_eq!(l.per_example_epsilon(1e-5).unwrap(), vec![0.0; 4]);
}

#[test]
fn single_contribution() {
    let mut l = PdpLedger::new(1);
    l.record_step(&[0.3], 0.5).unwrap();
    assert_eq!(l.per_example_mu(), vec![0.3]);
}

#[test]
fn saturated_example_matches_dp_bound() {
    let mut l = PdpLedger::new(2);
    let worst = 0.05;
    for _ in 0..400 {
        l.record_step(&[worst, 0.01], worst).unwrap();
    }
    let mu = l.per_example_mu();
    assert!((mu[0] - l.worst_case_mu()).abs() < 1e-12);
    assert!((mu[0] - 1.0).abs() < 1e-12);
    let eps = l.per_example_epsilon(1e-5).unwrap();
    let dp = epsilon_of_mu(GdpParam::new(l.worst_case_mu()).unwrap(), 1e-5).unwrap();
    assert!((eps[0] - dp).abs() < 1e-9);
    assert!(eps[1] < eps[0]);
}

#[test]
fn summary_and_histogram_bookkeeping() {
    let mut l = PdpLedger::new(10);
    let c: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    l.record_step(&c, 1.0).unwrap();
    let s = l.summary(1e-5).unwrap();
    assert_eq!(s.examples, 10);
    assert_eq!(s.mu.min, 0.0);
    assert!((s.mu.max - 0.9).abs() < 1e-15);
    assert_eq!(s.mu.deciles.len(), 9);
    assert!(s.mu.deciles.windows(2).all(|w| w[0] <= w[1]));
    let h = l.histogram(7).unwrap();
    assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 10);
}

#[test]
fn adamix_profile_is_dominated() {
    let (all, _) = make_synthetic(&SyntheticSpec {
        n: 240,
        d: 6,
        link: Link::Logistic,
        margin: 2.0,
        noise: 0.05,
        radius: 4.0,
        seed: 3,
    })
    .unwrap();
    let public = Arc::new(all.subset(&(0..40).collect::<Vec<_>>()).unwrap());
    let private = Arc::new(all.subset(&(40..240).collect::<Vec<_>>()).unwrap());
    let mut cfg = AdaMixConfig::new(public, private, DpPoint::new(1.0, 1e-5).unwrap(), 10.0, 2);
    cfg.lambda = 0.5;
    let run = adamix_theoretical(&cfg).unwrap();
    let ledger = PdpLedger::from_trace(200, &run.trace).unwrap();
    ledger.check().unwrap();
    assert!((ledger.worst_case_mu() - run.mu.mu()).abs() < 1e-12);
    let mut eps = ledger.per_example_epsilon(1e-5).unwrap();
    eps.sort_by(f64::total_cmp);
    let worst_eps = epsilon_of_mu(run.mu, 1e-5).unwrap();
    assert!(*eps.last().unwrap() <= worst_eps + 1e-9);
    // Well-fit examples pay less than the worst case.
    assert!(eps[0] < worst_eps);
}

proptest! {
    #[test]
    fn accumulates_sum_of_squares(
        steps in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..50),
    ) {
        let mut l = PdpLedger::new(5);
        for s in &steps {
            l.record_step(s, 1.0).unwrap();
        }
        let mu = l.per_example_mu();
        for i in 0..5 {
            let brute = steps.iter().map(|s| s[i] * s[i]).sum::<f64>().sqrt();
            prop_assert!((mu[i] - brute).abs() <= 1e-12);
            prop_assert!(mu[i] <= l.worst_case_mu() + 1e-12);
        }
    }

    #[test]
    fn permutation_equivariant(
        steps in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 1..20),
        shift in 0usize..6,
    ) {
        let mut a = PdpLedger::new(6);
        let mut b = PdpLedger::new(6);
        for s in &steps {
            a.record_step(s, 1.0).unwrap();
            let mut r = s.clone();
            r.rotate_left(shift);
            b.record_step(&r, 1.0).unwrap();
        }
        let mut ma = a.per_example_mu();
        ma.rotate_left(shift);
        prop_assert_eq!(ma, b.per_example_mu());
    }
}
