use preqcode::estimators::EstimatorKind;
use preqcode::lab::{
    codelength_gap_profile, fit_slope, klsum_trajectory, redundancy_direct, redundancy_klsum,
    run_experiment, RedundancyPath,
};
use preqcode::predictors::{squash_divergence_from_model, RuleKind};
use preqcode::sources::{registry, scenario};

#[test]
fn paths_agree_for_plugin_rules() {
    for label in [
        "geometric_wellspec_mu3",
        "gamma0.5_vs_gammak2",
        "scaledbern1_10_vs_geometric",
    ] {
        let s = scenario(label).unwrap();
        let curves = run_experiment(
            &s,
            &[RuleKind::ml_plugin(s.model())],
            &[RedundancyPath::DirectCodelength, RedundancyPath::KlSum],
            &[64, 512],
            600,
            21,
        )
        .unwrap();
        for (d, k) in curves[0].points.iter().zip(&curves[1].points) {
            let z = (d.mean_nats - k.mean_nats).abs() / d.std_error.hypot(k.std_error);
            assert!(
                z <= 3.0,
                "{label} n={}: {} vs {} ({z:.2} se)",
                d.n,
                d.mean_nats,
                k.mean_nats
            );
        }
    }
}

#[test]
fn klsum_is_nondecreasing_within_a_replication() {
    for s in registry() {
        let traj = klsum_trajectory(&s, RuleKind::ml_plugin(s.model()), 500, 5, 3).unwrap();
        assert!(traj.windows(2).all(|w| w[1] >= w[0]), "{}", s.label());
    }
}

#[test]
fn constant_at_target_has_zero_direct_redundancy() {
    let s = scenario("negbin1_vs_poisson").unwrap();
    let rule = RuleKind::Plugin(EstimatorKind::ConstantAt { mu: 3.0 });
    let curve = redundancy_direct(&s, rule, &[16, 256], 400, 8).unwrap();
    for p in &curve.points {
        assert_eq!(p.mean_nats, 0.0);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = scenario("widenormal4_vs_normvar1").unwrap();
    let rules = [
        RuleKind::ml_plugin(s.model()),
        RuleKind::squashed_ml(s.model()),
    ];
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            run_experiment(
                &s,
                &rules,
                &[RedundancyPath::DirectCodelength],
                &[32, 128],
                50,
                77,
            )
            .unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn squashed_code_is_almost_in_model() {
    for s in registry() {
        let model = s.model();
        let mu = s.mu_star();
        let scaled: Vec<f64> = [100u64, 1000, 10_000]
            .iter()
            .map(|&n| n as f64 * squash_divergence_from_model(model, &mu, n).unwrap())
            .collect();
        assert!(
            scaled
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0 && *v < 1.0),
            "{}: {scaled:?}",
            s.label()
        );
    }
}

#[test]
fn bayes_and_squashed_differ_by_order_one_over_n() {
    let s = scenario("widenormal4_vs_normvar1").unwrap();
    let gaps = codelength_gap_profile(
        &s,
        RuleKind::BayesNormalLocation {
            mu0: 0.0,
            tau0sq: 1.0,
        },
        RuleKind::squashed_ml(s.model()),
        &[100, 1000, 10_000],
        300,
        4,
    )
    .unwrap();
    let scaled: Vec<f64> = gaps.iter().map(|g| g.n as f64 * g.mean_abs_gap).collect();
    // n·gap must not grow with n.
    assert!(scaled[2] < 2.0 * scaled[0], "{scaled:?}");
}

#[test]
fn misspecified_geometric_slope_follows_variance_ratio() {
    let s = scenario("scaledbern1_10_vs_geometric").unwrap();
    let curve = redundancy_direct(
        &s,
        RuleKind::ml_plugin(s.model()),
        &preqcode::lab::pow2_grid(6, 12),
        800,
        3,
    )
    .unwrap();
    let fit = fit_slope(&curve, 64).unwrap();
    let ratio = s.variance_ratio();
    assert!(
        (fit.coefficient - ratio).abs() < 3.0 * fit.confidence_halfwidth.max(0.1),
        "{} vs {ratio}",
        fit.coefficient
    );
}

#[test]
fn klsum_curve_matches_n_times_kl_for_constant_rules() {
    let s = scenario("gammak2_wellspec_mu2").unwrap();
    let mu = s.model().param(2.5).unwrap();
    let d = s.model().kl_divergence(&s.mu_star(), &mu);
    let curve = redundancy_klsum(
        &s,
        RuleKind::Plugin(EstimatorKind::ConstantAt { mu: 2.5 }),
        &[7, 70],
        2,
        1,
    )
    .unwrap();
    for p in &curve.points {
        assert!((p.mean_nats - p.n as f64 * d).abs() < 1e-12 * p.n as f64);
    }
}
