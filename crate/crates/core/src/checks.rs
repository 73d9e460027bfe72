//! Self-check suites run by the `check` command.

// `!(x < tol)` is used on purpose so NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::estimators::EstimatorKind;
use crate::expfam::{FamilyKind, FamilyModel, MeanParam};
use crate::lab::{run_experiment, RedundancyPath};
use crate::predictors::{
    code_sequence, squash_coefficient, squash_normalization_check, RuleKind, SquashIndex,
};
use crate::sources::{check_condition2, registry, scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckLevel {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {} ({:.2}s): {}",
            self.name, self.seconds, self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

/// Interior range used when drawing random test parameters.
pub fn interior_range(model: &FamilyModel) -> (f64, f64) {
    match model.kind() {
        FamilyKind::Bernoulli => (0.05, 0.95),
        FamilyKind::Poisson => (0.2, 20.0),
        FamilyKind::Geometric => (1.1, 20.0),
        FamilyKind::GammaFixedShape => (0.2, 20.0),
        FamilyKind::NormalFixedVariance => (-5.0, 5.0),
        FamilyKind::NormalFixedMean => (0.2, 10.0),
    }
}

pub fn random_interior<R: Rng + ?Sized>(model: &FamilyModel, rng: &mut R) -> MeanParam {
    let (lo, hi) = interior_range(model);
    model
        .param(rng.random_range(lo..hi))
        .expect("interior range lies in the mean space")
}

/// The six families with their default hyperparameters plus a second
/// gamma shape and normal variance.
pub fn test_models() -> Vec<FamilyModel> {
    let mut models: Vec<FamilyModel> = FamilyKind::ALL
        .iter()
        .map(|&k| FamilyModel::with_defaults(k))
        .collect();
    models.push(FamilyModel::gamma(2.5).expect("valid shape"));
    models.push(FamilyModel::normal_fixed_variance(2.0).expect("valid variance"));
    models
}

fn timed(name: &str, f: impl FnOnce() -> Result<String, String>) -> CheckOutcome {
    let start = Instant::now();
    let result = f();
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(detail) => CheckOutcome {
            name: name.into(),
            passed: true,
            detail,
            seconds,
        },
        Err(detail) => CheckOutcome {
            name: name.into(),
            passed: false,
            detail,
            seconds,
        },
    }
}

/// `|I(μ)·var(μ) − 1| < 1e-9` at random interior μ, with the variance also
/// recomputed by summation or quadrature. `fisher` is injectable so a broken
/// formula can be shown to fail.
pub fn fisher_identity_check(
    fisher: impl Fn(&FamilyModel, &MeanParam) -> f64,
    samples: usize,
    seed: u64,
) -> CheckOutcome {
    timed("fisher_identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for model in test_models() {
            for _ in 0..samples {
                let mu = random_interior(&model, &mut rng);
                let info = fisher(&model, &mu);
                let err = (info * model.variance(&mu) - 1.0).abs();
                worst = worst.max(err);
                if !(err < 1e-9) {
                    return Err(format!("{model} at mu={}: I*var - 1 = {err:e}", mu.value()));
                }
            }
            for _ in 0..3 {
                let mu = random_interior(&model, &mut rng);
                let m = mu.value();
                let numeric = model
                    .expect_numeric(&mu, |z| (model.statistic(z) - m).powi(2))
                    .map_err(|e| format!("{model}: {e}"))?;
                let rel = (numeric * fisher(&model, &mu) - 1.0).abs();
                if !(rel < 1e-6) {
                    return Err(format!(
                        "{model} at mu={m}: numeric variance times I is off by {rel:e}"
                    ));
                }
            }
        }
        Ok(format!("worst |I*var - 1| = {worst:.1e}"))
    })
}

fn kl_check(seed: u64) -> CheckOutcome {
    timed("kl_divergence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in test_models() {
            for _ in 0..5 {
                let a = random_interior(&model, &mut rng);
                let b = random_interior(&model, &mut rng);
                if model.kl_divergence(&a, &a) != 0.0 {
                    return Err(format!("{model}: D(mu||mu) != 0 at {}", a.value()));
                }
                let closed = model.kl_divergence(&a, &b);
                if !(closed >= 0.0) {
                    return Err(format!("{model}: negative KL {closed}"));
                }
                let numeric = model
                    .expect_numeric(&a, |z| {
                        model.log_density(&a, z).unwrap_or(f64::NAN)
                            - model.log_density(&b, z).unwrap_or(f64::NAN)
                    })
                    .map_err(|e| format!("{model}: {e}"))?;
                if (numeric - closed).abs() > 1e-7 * closed.max(1.0) {
                    return Err(format!(
                        "{model}: KL closed form {closed} vs numeric {numeric}"
                    ));
                }
            }
        }
        Ok("closed forms match summation/quadrature".into())
    })
}

fn derivative_check(seed: u64) -> CheckOutcome {
    timed("derivatives", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in test_models() {
            for _ in 0..5 {
                let mu = random_interior(&model, &mut rng);
                let m = mu.value();
                let h = 1e-2 * (1.0 + m.abs()).min(boundary_distance(&model, m));
                let at = |v: f64| model.param(v).expect("stays interior");
                let i = |v: f64| model.fisher_info(&at(v));
                let d2i = (i(m + h) - 2.0 * i(m) + i(m - h)) / (h * h);
                let exact = model.fisher_second_derivative(&mu);
                if (d2i - exact).abs() > 1e-3 * exact.abs().max(1.0) {
                    return Err(format!(
                        "{model} at {m}: d2I {exact} vs finite difference {d2i}"
                    ));
                }
                let star = random_interior(&model, &mut rng);
                let d = |v: f64| model.kl_divergence(&star, &at(v));
                let d4 = (d(m + 2.0 * h) - 4.0 * d(m + h) + 6.0 * d(m) - 4.0 * d(m - h)
                    + d(m - 2.0 * h))
                    / h.powi(4);
                let exact = model.kl_fourth_derivative(&star, &mu);
                if (d4 - exact).abs() > 1e-2 * exact.abs().max(1.0) {
                    return Err(format!(
                        "{model} at {m} (mu*={}): d4D {exact} vs finite difference {d4}",
                        star.value()
                    ));
                }
            }
        }
        Ok("closed-form derivatives match finite differences".into())
    })
}

fn boundary_distance(model: &FamilyModel, m: f64) -> f64 {
    let space = model.mean_space();
    (m - space.lo).min(space.hi - m)
}

fn normalization_check(seed: u64, draws: usize) -> CheckOutcome {
    timed("squashed_normalization", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for model in test_models() {
            for _ in 0..draws {
                let mu = random_interior(&model, &mut rng);
                for n in [1, 10, 1000] {
                    let total = squash_normalization_check(&model, &mu, n)
                        .map_err(|e| format!("{model}: {e}"))?;
                    let err = (total - 1.0).abs();
                    worst = worst.max(err);
                    if !(err < 1e-6) {
                        return Err(format!("{model} at mu={} n={n}: mass {total}", mu.value()));
                    }
                }
            }
        }
        Ok(format!("worst |mass - 1| = {worst:.1e}"))
    })
}

/// Ratio of `D(μ*‖μ*+Δ) − Δ²I(μ*)/2` at Δ and Δ/10. `None` when the
/// expansion is exactly quadratic.
pub fn taylor_remainder_ratio(
    model: &FamilyModel,
    mu_star: &MeanParam,
    big: f64,
    small: f64,
) -> Option<f64> {
    let info = model.fisher_info(mu_star);
    let remainder = |delta: f64| {
        let mu = model
            .param(mu_star.value() + delta)
            .expect("step stays interior");
        // Use the step as represented so the quadratic term cancels exactly.
        let step = mu.value() - mu_star.value();
        model.kl_divergence(mu_star, &mu) - 0.5 * info * step * step
    };
    let (r_big, r_small) = (remainder(big), remainder(small));
    let noise = 1e-10 * info * big * big;
    if r_big.abs() <= noise {
        return None;
    }
    Some(r_big / r_small)
}

fn taylor_check(seed: u64) -> CheckOutcome {
    timed("kl_taylor", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in test_models() {
            for _ in 0..20 {
                let mu = random_interior(&model, &mut rng);
                if let Some(ratio) = taylor_remainder_ratio(&model, &mu, 1e-2, 1e-3) {
                    if !(ratio >= 1e3 / 3.0) {
                        return Err(format!(
                            "{model} at {}: remainder ratio {ratio}",
                            mu.value()
                        ));
                    }
                }
            }
        }
        Ok("remainder decays at least cubically".into())
    })
}

fn condition2_registry_check() -> CheckOutcome {
    timed("growth_condition", || {
        let mut count = 0;
        for s in registry() {
            let report = check_condition2(&s).map_err(|e| e.to_string())?;
            if !report.satisfied {
                return Err(format!("{}: {}", s.label(), report.notes.join("; ")));
            }
            count += 1;
        }
        Ok(format!(
            "{count} shipped scenarios satisfy the moment/growth condition"
        ))
    })
}

/// ML plug-in codelength equals squashed codelength plus the summed log
/// squash weights `ln(1 + s·I·(x − μ̂)²) − ln(1 + s)`.
fn decomposition_check(seed: u64) -> CheckOutcome {
    timed("squash_decomposition", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in registry() {
            let model = *s.model();
            let zs: Vec<f64> = (0..200).map(|_| s.source().draw(&mut rng)).collect();
            let ml = code_sequence(RuleKind::ml_plugin(&model), model, &zs, false)
                .map_err(|e| e.to_string())?;
            let sq = code_sequence(RuleKind::squashed_ml(&model), model, &zs, false)
                .map_err(|e| e.to_string())?;
            let est = EstimatorKind::smoothed(&model);
            let mut state = est.initial_state();
            let mut correction = 0.0;
            for (i, &z) in zs.iter().enumerate() {
                let mu = est.estimate(&model, &state).mean;
                let sn = squash_coefficient(i as u64, 1.0, SquashIndex::Observations);
                let d = model.statistic(z) - mu.value();
                correction += (sn * model.fisher_info(&mu) * d * d).ln_1p() - sn.ln_1p();
                state.update(model.statistic(z));
            }
            let gap = ml.total_nats - (sq.total_nats + correction);
            if gap.abs() > 1e-9 * ml.total_nats.abs().max(1.0) {
                return Err(format!("{}: decomposition off by {gap:e}", s.label()));
            }
        }
        Ok("holds on every shipped scenario".into())
    })
}

fn path_equivalence_check(seed: u64) -> CheckOutcome {
    timed("path_equivalence", || {
        let mut lines = Vec::new();
        for label in [
            "poisson_wellspec_mu3",
            "negbin1_vs_poisson",
            "widenormal4_vs_normvar1",
        ] {
            let s = scenario(label).map_err(|e| e.to_string())?;
            let rule = RuleKind::ml_plugin(s.model());
            let curves = run_experiment(
                &s,
                &[rule],
                &[RedundancyPath::DirectCodelength, RedundancyPath::KlSum],
                &[256, 1024],
                2000,
                seed,
            )
            .map_err(|e| e.to_string())?;
            for (d, k) in curves[0].points.iter().zip(&curves[1].points) {
                let combined = d.std_error.hypot(k.std_error);
                let z = (d.mean_nats - k.mean_nats).abs() / combined;
                if !(z <= 3.0) {
                    return Err(format!(
                        "{label} n={}: direct {} vs klsum {} ({z:.2} combined se)",
                        d.n, d.mean_nats, k.mean_nats
                    ));
                }
                lines.push(format!("{label}@{}: {z:.2}se", d.n));
            }
        }
        Ok(lines.join(", "))
    })
}

pub fn run_checks(level: CheckLevel) -> CheckReport {
    let mut outcomes = vec![
        fisher_identity_check(|m, mu| m.fisher_info(mu), 100, 1),
        kl_check(2),
        derivative_check(3),
        normalization_check(4, 3),
        taylor_check(5),
        condition2_registry_check(),
        decomposition_check(6),
    ];
    if level == CheckLevel::Full {
        outcomes.push(path_equivalence_check(7));
    }
    CheckReport { outcomes }
}
