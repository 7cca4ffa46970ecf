use mixdp_harness::config::{Algorithm, ExperimentConfig, Privacy};
use mixdp_harness::experiment::{cmd_run, Experiment, SeedStatus};
use mixdp_harness::sweep::{cmd_sweep, Axis};

fn config(json: &str) -> ExperimentConfig {
    let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn seeds(n: u64) -> String {
    (0..n).map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

#[test]
fn adamix_practical_beats_fully_private_with_five_percent_public() {
    // High-dimensional task: isotropic noise in all d coordinates hurts fully
    // private training, while the adaptive projection keeps noise rank-1.
    let base = format!(
        r#"{{"version": 1,
            "problem": {{"source": "synthetic", "link": {{"kind": "logistic"}}, "d": 500,
                         "n_public": 50, "n_private": 950, "margin": 30, "noise": 0.05, "data_seed": 0}},
            "algorithm": "fully_private", "privacy": {{"epsilon": 1, "delta": 1e-5}}, "seeds": [{}]}}"#,
        seeds(20)
    );
    let fully = cmd_run(config(&base), None).unwrap();
    let mut cfg = config(&base);
    cfg.algorithm = Algorithm::AdamixPractical;
    let practical = cmd_run(cfg, None).unwrap();
    let (a, b) = (
        practical.aggregate.excess_empirical_risk.mean,
        fully.aggregate.excess_empirical_risk.mean,
    );
    assert_eq!(practical.aggregate.ok_seeds, 20);
    assert!(a <= b, "adamix_practical {a} > fully_private {b}");
}

#[test]
fn large_epsilon_approaches_noiseless_solution() {
    let base = format!(
        r#"{{"version": 1,
            "problem": {{"source": "synthetic", "link": {{"kind": "logistic"}}, "d": 5,
                         "n_public": 0, "n_private": 200, "margin": 3, "noise": 0.05, "data_seed": 3}},
            "algorithm": "fully_private", "lambda": 1.0, "sigma": 20, "seeds": [{}]}}"#,
        seeds(5)
    );
    // σ = 0 reference: the regularized optimum, computed by the paragon.
    let mut paragon = config(&base);
    paragon.algorithm = Algorithm::NonPrivate;
    paragon.seeds = vec![0];
    let target = cmd_run(paragon, None)
        .unwrap()
        .aggregate
        .excess_empirical_risk
        .mean;

    let gap_at = |epsilon: f64| {
        let mut c = config(&base);
        c.privacy = Privacy::Dp {
            epsilon,
            delta: 1e-5,
        };
        let r = cmd_run(c, None).unwrap();
        let s = &r.aggregate.excess_empirical_risk;
        ((s.mean - target).abs(), s.std / (s.count as f64).sqrt())
    };
    let (small_gap, _) = gap_at(0.5);
    let (big_gap, se) = gap_at(50.0);
    assert!(big_gap < small_gap, "{big_gap} vs {small_gap}");
    assert!(big_gap <= 3.0 * se + 1e-3, "gap {big_gap}, SE {se}");
}

#[test]
fn performance_boost_decreases_with_public_size() {
    let cfg = config(&format!(
        r#"{{"version": 1,
            "problem": {{"source": "synthetic", "link": {{"kind": "logistic"}}, "d": 20,
                         "n_public": 10, "n_private": 500, "n_test": 4000, "margin": 30, "data_seed": 1}},
            "algorithm": "adamix_theoretical", "privacy": {{"epsilon": 1, "delta": 1e-5}}, "seeds": [{}]}}"#,
        seeds(20)
    ));
    let axis: Axis = "n_public=10,50,200,800".parse().unwrap();
    let rows = cmd_sweep(&cfg, &axis, None).unwrap();
    let pb: Vec<f64> = rows.iter().map(|r| r.performance_boost).collect();
    assert!(pb.iter().all(|v| v.is_finite()), "{pb:?}");
    assert!(pb.windows(2).all(|w| w[1] < w[0]), "{pb:?}");
}

#[test]
fn rho_budget_is_respected() {
    let cfg = config(
        r#"{"version": 1,
            "problem": {"source": "synthetic", "link": {"kind": "logistic"}, "d": 4,
                        "n_public": 10, "n_private": 100, "data_seed": 5},
            "algorithm": "noisy_gd", "privacy": {"rho": 0.5}, "sigma": 10, "seeds": [0]}"#,
    );
    let exp = Experiment::prepare(cfg).unwrap();
    let run = exp.run_seed(0);
    assert_eq!(run.outcome.status, SeedStatus::Ok);
    assert!(run.outcome.rho <= 0.5 + 1e-9, "{}", run.outcome.rho);
    // One more step would exceed the budget.
    let t = run.outcome.steps as f64;
    assert!((t + 1.0) / (2.0 * 100.0) > 0.5 - 1e-9);
}

#[test]
fn lambda_auto_uses_planted_distance() {
    let cfg = config(
        r#"{"version": 1,
            "problem": {"source": "synthetic", "link": {"kind": "logistic"}, "d": 4,
                        "n_public": 10, "n_private": 100, "data_seed": 5},
            "algorithm": "noisy_gd", "lambda": "auto", "seeds": [0]}"#,
    );
    let exp = Experiment::prepare(cfg).unwrap();
    let run = exp.run_seed(0);
    assert_eq!(run.outcome.status, SeedStatus::Ok);
    assert!(run.outcome.lambda > 0.0 && run.outcome.lambda != 1e-2);
}

#[test]
fn reports_embed_hash_and_seeds() {
    let cfg = config(
        r#"{"version": 1,
            "problem": {"source": "synthetic", "link": {"kind": "squared"}, "d": 3,
                        "n_public": 10, "n_private": 50, "n_test": 50, "data_seed": 5},
            "algorithm": "adamix_theoretical", "seeds": [4, 2]}"#,
    );
    let hash = cfg.hash();
    let r = cmd_run(cfg, None).unwrap();
    assert_eq!(r.config_hash, hash);
    assert_eq!(r.seeds, vec![4, 2]);
    assert_eq!(
        r.per_seed.iter().map(|s| s.seed).collect::<Vec<_>>(),
        vec![4, 2]
    );
    for s in &r.per_seed {
        let b = s.bound.as_ref().unwrap();
        assert!(b.excess <= b.bound);
    }
}
