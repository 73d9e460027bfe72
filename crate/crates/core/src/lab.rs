//! Monte Carlo measurement of relative redundancy.
//!
//! The redundancy of a code U against a scenario (P, M) is
//! `E_P[L_U(Z^n)] − E_P[−ln M_{μ*}(Z^n)]` with `μ* = E_P[X]`. Two estimators
//! are provided. The direct path averages the codelength difference over
//! simulated sequences. The KL-sum path, valid for in-model plug-in codes,
//! averages `Σ_{i<n} D(M_{μ*} ‖ M_{μ̄_i})` instead, which removes the
//! sampling noise of the outcome coded at each step.
//!
//! Every replication draws from its own stream keyed by `(seed, replication)`
//! and the per-replication results are reduced in replication order, so the
//! output does not depend on the number of worker threads.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::{mean_and_stderr, EstimatorKind};
use crate::predictors::{PredictError, PredictiveRule, RuleKind};
use crate::rng::replication_rng;
use crate::sources::Scenario;

pub const MIN_REPLICATIONS: usize = 2;
pub const MIN_FIT_POINTS: usize = 4;
/// Grid points below this are dropped from slope fits by default.
pub const DEFAULT_BURN_IN: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid n grid: {0}")]
    InvalidGrid(String),
    #[error("at least {min} replications are required, got {got}")]
    TooFewReplications { min: usize, got: usize },
    #[error("the KL-sum path needs an in-model plug-in rule; use the direct path for {rule}")]
    UnsupportedPath { rule: String },
    #[error("rule {rule} failed at n={n}, replication {replication}: {reason}")]
    Replication {
        rule: String,
        n: u64,
        replication: u64,
        reason: String,
    },
    #[error("slope fit needs at least {needed} grid points with n >= {burn_in}, got {got}")]
    InsufficientPoints {
        needed: usize,
        got: usize,
        burn_in: u64,
    },
    #[error(transparent)]
    Rule(#[from] PredictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RedundancyPath {
    DirectCodelength,
    KlSum,
}

impl RedundancyPath {
    pub fn name(self) -> &'static str {
        match self {
            RedundancyPath::DirectCodelength => "direct",
            RedundancyPath::KlSum => "klsum",
        }
    }
}

impl fmt::Display for RedundancyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n: u64,
    pub mean_nats: f64,
    pub std_error: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedundancyCurve {
    pub scenario_label: String,
    pub rule: RuleKind,
    pub path: RedundancyPath,
    pub points: Vec<CurvePoint>,
    /// Per-replication cumulative redundancy, `[replication][grid index]`.
    /// Empty for hand-built curves.
    pub replicates: Vec<Vec<f64>>,
}

impl RedundancyCurve {
    /// A curve with given means and standard errors and no replicate data.
    pub fn from_points(
        label: &str,
        rule: RuleKind,
        path: RedundancyPath,
        points: Vec<CurvePoint>,
    ) -> Self {
        Self {
            scenario_label: label.to_string(),
            rule,
            path,
            points,
            replicates: Vec::new(),
        }
    }

    pub fn grid(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn at(&self, n: u64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Multiplier of ½ ln n.
    pub coefficient: f64,
    pub intercept: f64,
    pub burn_in_n: u64,
    pub residual_rms: f64,
    /// 95% normal-approximation halfwidth for the coefficient.
    pub confidence_halfwidth: f64,
    pub points_used: usize,
}

/// `[2^lo, 2^(lo+1), …, 2^hi]`.
pub fn pow2_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}

pub fn default_grid() -> Vec<u64> {
    pow2_grid(6, 14)
}

fn validate_grid(grid: &[u64]) -> Result<(), LabError> {
    if grid.is_empty() {
        return Err(LabError::InvalidGrid("empty".into()));
    }
    if grid[0] == 0 {
        return Err(LabError::InvalidGrid("n must be at least 1".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidGrid(
            "values must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Cumulative redundancy of one rule on one simulated sequence, sampled at
/// the grid points. `direct` and `klsum` select which sums to keep.
struct Trajectory {
    direct: Vec<f64>,
    klsum: Vec<f64>,
}

fn trace_rule(
    scenario: &Scenario,
    kind: RuleKind,
    zs: &[f64],
    grid: &[u64],
    want_klsum: bool,
    replication: u64,
) -> Result<Trajectory, LabError> {
    let model = *scenario.model();
    let mu_star = scenario.mu_star();
    let mut rule = PredictiveRule::new(kind, model)?;
    let fail = |n: u64, reason: String| LabError::Replication {
        rule: kind.to_string(),
        n,
        replication,
        reason,
    };
    let mut direct = 0.0;
    let mut klsum = 0.0;
    let mut out = Trajectory {
        direct: Vec::with_capacity(grid.len()),
        klsum: Vec::new(),
    };
    let mut next = 0;
    for (i, &z) in zs.iter().enumerate() {
        let n = i as u64 + 1;
        let coded = rule
            .predict_log_density(z)
            .map_err(|e| fail(n, e.to_string()))?;
        let reference = model
            .log_density(&mu_star, z)
            .map_err(|e| fail(n, e.to_string()))?;
        direct += reference - coded;
        if want_klsum {
            let d = model.kl_divergence(&mu_star, &rule.current_estimate());
            if !d.is_finite() {
                return Err(fail(n, "non-finite KL divergence".into()));
            }
            klsum += d;
        }
        if !direct.is_finite() {
            return Err(fail(n, "non-finite codelength".into()));
        }
        rule.observe(z).map_err(|e| fail(n, e.to_string()))?;
        if grid[next] == n {
            out.direct.push(direct);
            if want_klsum {
                out.klsum.push(klsum);
            }
            next += 1;
            if next == grid.len() {
                break;
            }
        }
    }
    Ok(out)
}

/// Simulates `reps` sequences from the scenario's source and measures every
/// requested (rule, path) pair on the same sequences.
///
/// Curves are returned rule-major in the order of `rules` and `paths`.
pub fn run_experiment(
    scenario: &Scenario,
    rules: &[RuleKind],
    paths: &[RedundancyPath],
    grid: &[u64],
    reps: usize,
    seed: u64,
) -> Result<Vec<RedundancyCurve>, LabError> {
    validate_grid(grid)?;
    if reps < MIN_REPLICATIONS {
        return Err(LabError::TooFewReplications {
            min: MIN_REPLICATIONS,
            got: reps,
        });
    }
    let want_klsum = paths.contains(&RedundancyPath::KlSum);
    for rule in rules {
        rule.validate_for(scenario.model())?;
        if want_klsum && !rule.is_in_model() {
            return Err(LabError::UnsupportedPath {
                rule: rule.to_string(),
            });
        }
    }
    let n_max = *grid.last().expect("validated") as usize;
    let source = scenario.source();

    let per_rep: Vec<Result<Vec<Trajectory>, LabError>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let zs: Vec<f64> = (0..n_max).map(|_| source.draw(&mut rng)).collect();
            rules
                .iter()
                .map(|&kind| trace_rule(scenario, kind, &zs, grid, want_klsum, rep))
                .collect()
        })
        .collect();
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut curves = Vec::with_capacity(rules.len() * paths.len());
    for (r, &kind) in rules.iter().enumerate() {
        for &path in paths {
            let replicates: Vec<Vec<f64>> = per_rep
                .iter()
                .map(|t| match path {
                    RedundancyPath::DirectCodelength => t[r].direct.clone(),
                    RedundancyPath::KlSum => t[r].klsum.clone(),
                })
                .collect();
            let points = grid
                .iter()
                .enumerate()
                .map(|(g, &n)| {
                    let (mean, se) = mean_and_stderr(replicates.iter().map(|v| v[g]), reps);
                    CurvePoint {
                        n,
                        mean_nats: mean,
                        std_error: se,
                        replications: reps,
                    }
                })
                .collect();
            curves.push(RedundancyCurve {
                scenario_label: scenario.label().to_string(),
                rule: kind,
                path,
                points,
                replicates,
            });
        }
    }
    Ok(curves)
}

pub fn redundancy_direct(
    scenario: &Scenario,
    rule: RuleKind,
    grid: &[u64],
    reps: usize,
    seed: u64,
) -> Result<RedundancyCurve, LabError> {
    let mut curves = run_experiment(
        scenario,
        &[rule],
        &[RedundancyPath::DirectCodelength],
        grid,
        reps,
        seed,
    )?;
    Ok(curves.remove(0))
}

pub fn redundancy_klsum(
    scenario: &Scenario,
    rule: RuleKind,
    grid: &[u64],
    reps: usize,
    seed: u64,
) -> Result<RedundancyCurve, LabError> {
    let mut curves = run_experiment(
        scenario,
        &[rule],
        &[RedundancyPath::KlSum],
        grid,
        reps,
        seed,
    )?;
    Ok(curves.remove(0))
}

/// Running KL-sum after every step of a single replication.
pub fn klsum_trajectory(
    scenario: &Scenario,
    rule: RuleKind,
    n: u64,
    seed: u64,
    replication: u64,
) -> Result<Vec<f64>, LabError> {
    if !rule.is_in_model() {
        return Err(LabError::UnsupportedPath {
            rule: rule.to_string(),
        });
    }
    let mut rng = replication_rng(seed, replication);
    let zs: Vec<f64> = (0..n).map(|_| scenario.source().draw(&mut rng)).collect();
    let grid: Vec<u64> = (1..=n).collect();
    Ok(trace_rule(scenario, rule, &zs, &grid, true, replication)?.klsum)
}

/// Least-squares fit of mean redundancy against ½ ln n over `n ≥ burn_in_n`.
///
/// With replicate data the halfwidth comes from the spread of the same
/// linear fit applied to each replication, which accounts for the strong
/// correlation between cumulative values at different n. Hand-built curves
/// fall back to treating the per-n standard errors as independent.
pub fn fit_slope(curve: &RedundancyCurve, burn_in_n: u64) -> Result<SlopeFit, LabError> {
    let used: Vec<usize> = (0..curve.points.len())
        .filter(|&i| curve.points[i].n >= burn_in_n)
        .collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(LabError::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: used.len(),
            burn_in: burn_in_n,
        });
    }
    let xs: Vec<f64> = used
        .iter()
        .map(|&i| 0.5 * (curve.points[i].n as f64).ln())
        .collect();
    let ys: Vec<f64> = used.iter().map(|&i| curve.points[i].mean_nats).collect();
    let m = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar).powi(2)).sum();
    let weights: Vec<f64> = xs.iter().map(|x| (x - x_bar) / sxx).collect();
    let slope_of = |y: &dyn Fn(usize) -> f64| {
        weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * y(j))
            .sum::<f64>()
    };

    let coefficient = slope_of(&|j| ys[j]);
    let y_bar = ys.iter().sum::<f64>() / m;
    let intercept = y_bar - coefficient * x_bar;
    let residual_rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - coefficient * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();

    let se = if curve.replicates.len() >= 2 {
        let per_rep: Vec<f64> = curve
            .replicates
            .iter()
            .map(|v| slope_of(&|j| v[used[j]]))
            .collect();
        mean_and_stderr(per_rep.iter().copied(), per_rep.len()).1
    } else {
        weights
            .iter()
            .zip(&used)
            .map(|(w, &i)| (w * curve.points[i].std_error).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(SlopeFit {
        coefficient,
        intercept,
        burn_in_n,
        residual_rms,
        confidence_halfwidth: 1.96 * se,
        points_used: used.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub estimator: EstimatorKind,
    pub fit: SlopeFit,
    pub variance_ratio: f64,
    /// Coefficient below `variance_ratio − margin`.
    pub below_bound: bool,
    /// A constant estimator placed exactly at μ*: the null-set exception
    /// that may beat the bound.
    pub null_exception: bool,
}

/// Fits the KL-sum redundancy slope of every estimator in `zoo` and flags
/// those that fall materially below the variance ratio.
pub fn theorem1_probe(
    scenario: &Scenario,
    zoo: &[EstimatorKind],
    grid: &[u64],
    reps: usize,
    seed: u64,
    burn_in_n: u64,
    margin: f64,
) -> Result<Vec<ProbeRow>, LabError> {
    let rules: Vec<RuleKind> = zoo.iter().map(|&e| RuleKind::Plugin(e)).collect();
    let curves = run_experiment(scenario, &rules, &[RedundancyPath::KlSum], grid, reps, seed)?;
    let ratio = scenario.variance_ratio();
    let mu_star = scenario.mu_star().value();
    zoo.iter()
        .zip(&curves)
        .map(|(&estimator, curve)| {
            let fit = fit_slope(curve, burn_in_n)?;
            Ok(ProbeRow {
                estimator,
                fit,
                variance_ratio: ratio,
                below_bound: fit.coefficient < ratio - margin,
                null_exception: matches!(estimator, EstimatorKind::ConstantAt { mu } if mu == mu_star),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPoint {
    /// Number of outcomes already observed when coding the next one.
    pub n: u64,
    pub mean_abs_gap: f64,
    pub std_error: f64,
}

/// Mean absolute difference between the codelengths two rules assign to
/// outcome n+1 after the same history of n outcomes, at each checkpoint n.
pub fn codelength_gap_profile(
    scenario: &Scenario,
    rule_a: RuleKind,
    rule_b: RuleKind,
    checkpoints: &[u64],
    reps: usize,
    seed: u64,
) -> Result<Vec<GapPoint>, LabError> {
    validate_grid(checkpoints)?;
    if reps < MIN_REPLICATIONS {
        return Err(LabError::TooFewReplications {
            min: MIN_REPLICATIONS,
            got: reps,
        });
    }
    let model = *scenario.model();
    let n_max = *checkpoints.last().expect("validated");
    let per_rep: Vec<Result<Vec<f64>, LabError>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let mut a = PredictiveRule::new(rule_a, model)?;
            let mut b = PredictiveRule::new(rule_b, model)?;
            let mut gaps = Vec::with_capacity(checkpoints.len());
            let mut next = 0;
            for n in 0..=n_max {
                let z = scenario.source().draw(&mut rng);
                if checkpoints[next] == n {
                    let fail = |e: PredictError| LabError::Replication {
                        rule: rule_a.to_string(),
                        n,
                        replication: rep,
                        reason: e.to_string(),
                    };
                    let la = a.predict_log_density(z).map_err(fail)?;
                    let lb = b.predict_log_density(z).map_err(fail)?;
                    gaps.push((la - lb).abs());
                    next += 1;
                    if next == checkpoints.len() {
                        break;
                    }
                }
                a.observe(z)?;
                b.observe(z)?;
            }
            Ok(gaps)
        })
        .collect();
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let (mean, se) = mean_and_stderr(per_rep.iter().map(|v| v[g]), reps);
            GapPoint {
                n,
                mean_abs_gap: mean,
                std_error: se,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::scenario;

    fn synthetic(f: impl Fn(f64) -> f64) -> RedundancyCurve {
        let points = pow2_grid(6, 14)
            .into_iter()
            .map(|n| CurvePoint {
                n,
                mean_nats: f(n as f64),
                std_error: 0.01,
                replications: 10,
            })
            .collect();
        let pois = crate::expfam::FamilyModel::poisson();
        RedundancyCurve::from_points(
            "synthetic",
            RuleKind::ml_plugin(&pois),
            RedundancyPath::DirectCodelength,
            points,
        )
    }

    #[test]
    fn exact_fits() {
        let fit = fit_slope(&synthetic(|n| 0.5 * n.ln() + 3.0), 64).unwrap();
        assert!((fit.coefficient - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-10);
        assert!(fit.residual_rms < 1e-10);
        let fit = fit_slope(&synthetic(|n| 2.0 * n.ln() - 1.0), 64).unwrap();
        assert!((fit.coefficient - 4.0).abs() < 1e-12);
        assert!(fit.confidence_halfwidth > 0.0);
    }

    #[test]
    fn fit_needs_points() {
        let err = fit_slope(&synthetic(|n| n.ln()), 4096).unwrap_err();
        assert!(matches!(err, LabError::InsufficientPoints { got: 3, .. }));
    }

    #[test]
    fn constant_at_mu_star_is_exactly_zero_on_klsum() {
        let s = scenario("poisson_wellspec_mu3").unwrap();
        let rule = RuleKind::Plugin(EstimatorKind::ConstantAt { mu: 3.0 });
        let curve = redundancy_klsum(&s, rule, &[10, 100], 5, 1).unwrap();
        for p in &curve.points {
            assert_eq!(p.mean_nats, 0.0);
            assert_eq!(p.std_error, 0.0);
        }
    }

    #[test]
    fn constant_off_target_grows_linearly() {
        let s = scenario("poisson_wellspec_mu3").unwrap();
        let rule = RuleKind::Plugin(EstimatorKind::ConstantAt { mu: 2.0 });
        let curve = redundancy_klsum(&s, rule, &[10, 100], 3, 1).unwrap();
        let d = s
            .model()
            .kl_divergence(&s.mu_star(), &s.model().param(2.0).unwrap());
        for p in &curve.points {
            assert!((p.mean_nats - p.n as f64 * d).abs() < 1e-12 * p.n as f64);
        }
    }

    #[test]
    fn klsum_rejects_out_model_rules() {
        let s = scenario("poisson_wellspec_mu3").unwrap();
        let err = redundancy_klsum(&s, RuleKind::squashed_ml(s.model()), &[10], 3, 1).unwrap_err();
        assert!(matches!(err, LabError::UnsupportedPath { .. }));
    }

    #[test]
    fn bad_inputs() {
        let s = scenario("poisson_wellspec_mu3").unwrap();
        let rule = RuleKind::ml_plugin(s.model());
        assert!(matches!(
            redundancy_direct(&s, rule, &[10], 1, 1),
            Err(LabError::TooFewReplications { .. })
        ));
        assert!(matches!(
            redundancy_direct(&s, rule, &[10, 10], 3, 1),
            Err(LabError::InvalidGrid(_))
        ));
        assert!(matches!(
            redundancy_direct(&s, rule, &[], 3, 1),
            Err(LabError::InvalidGrid(_))
        ));
        assert!(matches!(
            redundancy_direct(&s, rule, &[0, 4], 3, 1),
            Err(LabError::InvalidGrid(_))
        ));
    }

    #[test]
    fn same_seed_same_curve() {
        let s = scenario("negbin1_vs_poisson").unwrap();
        let rule = RuleKind::squashed_ml(s.model());
        let a = redundancy_direct(&s, rule, &[8, 64], 20, 9).unwrap();
        let b = redundancy_direct(&s, rule, &[8, 64], 20, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_matches_curve() {
        let s = scenario("poisson_wellspec_mu3").unwrap();
        let rule = RuleKind::ml_plugin(s.model());
        let traj = klsum_trajectory(&s, rule, 50, 4, 2).unwrap();
        let curve = redundancy_klsum(&s, rule, &[50], 3, 4).unwrap();
        assert_eq!(traj[49], curve.replicates[2][0]);
    }
}
