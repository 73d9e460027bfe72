//! Closed forms checked against independent numerical computations.

use preqcode::checks::{random_interior, test_models};
use preqcode::expfam::{FamilyKind, FamilyModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Poisson pmf by the recursion p(k) = p(k-1)·λ/k, no gamma function.
fn poisson_pmf_table(lambda: f64, upto: usize) -> Vec<f64> {
    let mut p = vec![(-lambda).exp()];
    for k in 1..=upto {
        let prev = p[k - 1];
        p.push(prev * lambda / k as f64);
    }
    p
}

#[test]
fn poisson_kl_by_direct_summation() {
    let model = FamilyModel::poisson();
    for (a, b) in [(3.0, 2.0), (0.5, 4.0), (7.5, 7.0)] {
        let pa = poisson_pmf_table(a, 200);
        let pb = poisson_pmf_table(b, 200);
        let sum: f64 = pa
            .iter()
            .zip(&pb)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y).ln())
            .sum();
        let closed = model.kl_divergence(&model.param(a).unwrap(), &model.param(b).unwrap());
        assert!((sum - closed).abs() < 1e-12, "{a} {b}: {sum} vs {closed}");
    }
    let closed = model.kl_divergence(&model.param(3.0).unwrap(), &model.param(2.0).unwrap());
    assert!((closed - (3.0 * 1.5f64.ln() - 1.0)).abs() < 1e-15);
}

#[test]
fn geometric_kl_by_direct_summation() {
    // Support {1, 2, ...}, P(z) = (1-p)^(z-1) p with p = 1/μ.
    let model = FamilyModel::geometric();
    for (a, b) in [(3.0f64, 1.5f64), (1.2, 6.0)] {
        let (pa, pb) = (1.0 / a, 1.0 / b);
        let sum: f64 = (1..5000)
            .map(|z| {
                let la = (z as f64 - 1.0) * (1.0 - pa).ln() + pa.ln();
                let lb = (z as f64 - 1.0) * (1.0 - pb).ln() + pb.ln();
                la.exp() * (la - lb)
            })
            .sum();
        let closed = model.kl_divergence(&model.param(a).unwrap(), &model.param(b).unwrap());
        assert!((sum - closed).abs() < 1e-12, "{a} {b}: {sum} vs {closed}");
    }
}

#[test]
fn kl_matches_numeric_expectation_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for model in test_models() {
        for _ in 0..10 {
            let a = random_interior(&model, &mut rng);
            let b = random_interior(&model, &mut rng);
            let numeric = model
                .expect_numeric(&a, |z| {
                    model.log_density(&a, z).unwrap() - model.log_density(&b, z).unwrap()
                })
                .unwrap();
            let closed = model.kl_divergence(&a, &b);
            assert!(
                (numeric - closed).abs() < 1e-8 * closed.max(1.0),
                "{model}: {numeric} vs {closed}"
            );
        }
    }
}

#[test]
fn raw_moments_match_numeric_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for model in test_models() {
        let mu = random_interior(&model, &mut rng);
        let raw = model.raw_moments(&mu, 4);
        for (k, &expected) in raw.iter().enumerate() {
            let numeric = model
                .expect_numeric(&mu, |z| model.statistic(z).powi(k as i32))
                .unwrap();
            assert!(
                (numeric - expected).abs() < 1e-8 * expected.abs().max(1.0),
                "{model} k={k}: {numeric} vs {expected}"
            );
        }
        let var = model
            .expect_numeric(&mu, |z| (model.statistic(z) - mu.value()).powi(2))
            .unwrap();
        assert!((var - model.variance(&mu)).abs() < 1e-8 * var);
    }
}

#[test]
fn densities_match_textbook_forms() {
    let normal = FamilyModel::normal_fixed_variance(2.0).unwrap();
    let lp = normal
        .log_density(&normal.param(1.0).unwrap(), 2.5)
        .unwrap();
    let expected = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - 1.5f64.powi(2) / 4.0;
    assert!((lp - expected).abs() < 1e-14);

    // Outcome z ~ N(0, μ); the statistic is z².
    let nm = FamilyModel::normal_fixed_mean();
    let lp = nm.log_density(&nm.param(4.0).unwrap(), -1.0).unwrap();
    let expected = -0.5 * (2.0 * std::f64::consts::PI * 4.0).ln() - 1.0 / 8.0;
    assert!((lp - expected).abs() < 1e-14);
    assert_eq!(nm.statistic(-3.0), 9.0);

    let gamma = FamilyModel::gamma(2.0).unwrap();
    // Shape 2, mean 3 → rate 2/3: density (2/3)² z e^(-2z/3).
    let lp = gamma.log_density(&gamma.param(3.0).unwrap(), 1.5).unwrap();
    let expected = (4.0f64 / 9.0 * 1.5 * (-1.0f64).exp()).ln();
    assert!((lp - expected).abs() < 1e-14);

    let bern = FamilyModel::bernoulli();
    assert!(
        (bern.log_density(&bern.param(0.3).unwrap(), 1.0).unwrap() - 0.3f64.ln()).abs() < 1e-15
    );
}

#[test]
fn sample_means_track_the_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for kind in FamilyKind::ALL {
        let model = FamilyModel::with_defaults(kind);
        let mu = random_interior(&model, &mut rng);
        let n = 40_000;
        let mean = (0..n)
            .map(|_| model.statistic(model.sample(&mu, &mut rng)))
            .sum::<f64>()
            / n as f64;
        let se = (model.variance(&mu) / n as f64).sqrt();
        assert!(
            (mean - mu.value()).abs() < 5.0 * se,
            "{model}: {mean} vs {}",
            mu.value()
        );
    }
}
