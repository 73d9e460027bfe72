//! In-model parameter estimators: the smoothed ML estimator with a fake
//! initial outcome, and a few variants used to probe plug-in redundancy.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::expfam::{FamilyModel, MeanParam};
use crate::params::ParamList;
use crate::rng::replication_rng;
use crate::sources::Source;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid estimator `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error("invalid estimator parameter: {0}")]
    InvalidParameter(String),
    #[error("at least {min} replications are required, got {got}")]
    TooFewReplications { min: usize, got: usize },
}

/// Running state of the smoothed ML estimator
/// `(x0·n0 + Σ x_i) / (n + n0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedMlState {
    x0: f64,
    n0: f64,
    running_sum: f64,
    count: u64,
}

impl SmoothedMlState {
    pub fn new(x0: f64, n0: f64) -> Result<Self, EstimatorError> {
        if !(x0.is_finite() && n0.is_finite() && n0 > 0.0) {
            return Err(EstimatorError::InvalidParameter(format!(
                "need finite x0 and n0 > 0, got x0={x0}, n0={n0}"
            )));
        }
        Ok(Self {
            x0,
            n0,
            running_sum: x0 * n0,
            count: 0,
        })
    }

    pub fn update(&mut self, x: f64) {
        self.running_sum += x;
        self.count += 1;
    }

    pub fn estimate(&self) -> f64 {
        self.running_sum / (self.count as f64 + self.n0)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn running_sum(&self) -> f64 {
        self.running_sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    SmoothedMl {
        x0: f64,
        n0: f64,
    },
    /// Smoothed ML truncated to `[lo, hi]`.
    ClampedMl {
        x0: f64,
        n0: f64,
        lo: f64,
        hi: f64,
    },
    ConstantAt {
        mu: f64,
    },
    /// `x0 + shrink·(smoothed ML − x0)`.
    ShrunkenMl {
        x0: f64,
        n0: f64,
        shrink: f64,
    },
}

/// A point estimate, moved inside the mean space if necessary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: MeanParam,
    pub boundary_clamped: bool,
}

impl EstimatorKind {
    pub fn smoothed(model: &FamilyModel) -> Self {
        EstimatorKind::SmoothedMl {
            x0: model.default_prior_point(),
            n0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: String| Err(EstimatorError::InvalidParameter(m));
        let check_prior = |x0: f64, n0: f64| SmoothedMlState::new(x0, n0).map(|_| ());
        match *self {
            EstimatorKind::SmoothedMl { x0, n0 } => check_prior(x0, n0),
            EstimatorKind::ClampedMl { x0, n0, lo, hi } => {
                check_prior(x0, n0)?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("clamp bounds need lo < hi, got [{lo}, {hi}]"));
                }
                Ok(())
            }
            EstimatorKind::ConstantAt { mu } => {
                if !mu.is_finite() {
                    return bad(format!("constant must be finite, got {mu}"));
                }
                Ok(())
            }
            EstimatorKind::ShrunkenMl { x0, n0, shrink } => {
                check_prior(x0, n0)?;
                if !(shrink > 0.0 && shrink < 1.0) {
                    return bad(format!("shrink factor must lie in (0, 1), got {shrink}"));
                }
                Ok(())
            }
        }
    }

    /// Fresh running state for this estimator.
    pub fn initial_state(&self) -> SmoothedMlState {
        let (x0, n0) = match *self {
            EstimatorKind::SmoothedMl { x0, n0 }
            | EstimatorKind::ClampedMl { x0, n0, .. }
            | EstimatorKind::ShrunkenMl { x0, n0, .. } => (x0, n0),
            EstimatorKind::ConstantAt { mu } => (mu, 1.0),
        };
        SmoothedMlState::new(x0, n0).expect("validated estimator")
    }

    /// The estimate as a raw number, before any mean-space check.
    pub fn estimate_raw(&self, state: &SmoothedMlState) -> f64 {
        match *self {
            EstimatorKind::SmoothedMl { .. } => state.estimate(),
            EstimatorKind::ClampedMl { lo, hi, .. } => state.estimate().clamp(lo, hi),
            EstimatorKind::ConstantAt { mu } => mu,
            EstimatorKind::ShrunkenMl { x0, shrink, .. } => x0 + shrink * (state.estimate() - x0),
        }
    }

    pub fn estimate(&self, model: &FamilyModel, state: &SmoothedMlState) -> Estimate {
        let (value, boundary_clamped) = model.mean_space().clamp_inside(self.estimate_raw(state));
        let mean = model.param(value).expect("clamped into the mean space");
        Estimate {
            mean,
            boundary_clamped,
        }
    }

    /// Replaces the fake initial outcome and its multiplicity where the kind has one.
    pub fn with_prior(self, x0: Option<f64>, n0: Option<f64>) -> Self {
        match self {
            EstimatorKind::SmoothedMl { x0: a, n0: b } => EstimatorKind::SmoothedMl {
                x0: x0.unwrap_or(a),
                n0: n0.unwrap_or(b),
            },
            EstimatorKind::ClampedMl {
                x0: a,
                n0: b,
                lo,
                hi,
            } => EstimatorKind::ClampedMl {
                x0: x0.unwrap_or(a),
                n0: n0.unwrap_or(b),
                lo,
                hi,
            },
            EstimatorKind::ShrunkenMl {
                x0: a,
                n0: b,
                shrink,
            } => EstimatorKind::ShrunkenMl {
                x0: x0.unwrap_or(a),
                n0: n0.unwrap_or(b),
                shrink,
            },
            c @ EstimatorKind::ConstantAt { .. } => c,
        }
    }

    /// Parses `smoothed_ml(x0=..,n0=..)`, `clamped_ml(x0=..,n0=..,lo=..,hi=..)`,
    /// `constant(mu=..)` or `shrunken_ml(x0=..,n0=..,shrink=..)`. Missing x0
    /// and n0 default to the model's reference point and 1.
    pub fn parse_for(text: &str, model: &FamilyModel) -> Result<Self, EstimatorError> {
        let parse_err = |reason: String| EstimatorError::Parse {
            text: text.to_string(),
            reason,
        };
        let call = ParamList::parse(text).map_err(|e| parse_err(e.to_string()))?;
        let num = |k: &str| call.number(k).map_err(|e| parse_err(e.to_string()));
        let allowed: &[&str] = match call.name.as_str() {
            "smoothed_ml" => &["x0", "n0"],
            "clamped_ml" => &["x0", "n0", "lo", "hi"],
            "constant" => &["mu"],
            "shrunken_ml" => &["x0", "n0", "shrink"],
            other => return Err(parse_err(format!("unknown estimator `{other}`"))),
        };
        if let Some((k, _)) = call
            .args
            .iter()
            .find(|(k, _)| !allowed.contains(&k.as_str()))
        {
            return Err(parse_err(format!("unexpected argument `{k}`")));
        }
        let x0 = num("x0")?.unwrap_or(model.default_prior_point());
        let n0 = num("n0")?.unwrap_or(1.0);
        let required = |k: &str| num(k)?.ok_or_else(|| parse_err(format!("missing `{k}`")));
        let kind = match call.name.as_str() {
            "smoothed_ml" => EstimatorKind::SmoothedMl { x0, n0 },
            "clamped_ml" => EstimatorKind::ClampedMl {
                x0,
                n0,
                lo: required("lo")?,
                hi: required("hi")?,
            },
            "constant" => EstimatorKind::ConstantAt {
                mu: required("mu")?,
            },
            _ => EstimatorKind::ShrunkenMl {
                x0,
                n0,
                shrink: required("shrink")?,
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EstimatorKind::SmoothedMl { x0, n0 } => write!(f, "smoothed_ml(x0={x0},n0={n0})"),
            EstimatorKind::ClampedMl { x0, n0, lo, hi } => {
                write!(f, "clamped_ml(x0={x0},n0={n0},lo={lo},hi={hi})")
            }
            EstimatorKind::ConstantAt { mu } => write!(f, "constant(mu={mu})"),
            EstimatorKind::ShrunkenMl { x0, n0, shrink } => {
                write!(f, "shrunken_ml(x0={x0},n0={n0},shrink={shrink})")
            }
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = EstimatorError;

    /// Parses a fully specified estimator string; x0 defaults to 1 when absent.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_for(s, &FamilyModel::poisson())
    }
}

// ---------------------------------------------------------------------------
// Deviation statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationStats {
    pub n: u64,
    /// Monte Carlo estimate of E[(μ̄_n − μ*)²].
    pub mean_sq_dev: f64,
    pub std_error: f64,
    /// n · E[(μ̄_n − μ*)²].
    pub scaled: f64,
}

pub const MIN_DEVIATION_REPS: usize = 100;

/// Deviation statistics at every `n` in `grid` (strictly increasing),
/// sharing one simulated path per replication.
pub fn deviation_profile(
    kind: &EstimatorKind,
    source: &Source,
    grid: &[u64],
    reps: usize,
    seed: u64,
) -> Result<Vec<DeviationStats>, EstimatorError> {
    if reps < MIN_DEVIATION_REPS {
        return Err(EstimatorError::TooFewReplications {
            min: MIN_DEVIATION_REPS,
            got: reps,
        });
    }
    kind.validate()?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EstimatorError::InvalidParameter(
            "grid must be non-empty and strictly increasing".into(),
        ));
    }
    let mu_star = source.mean();
    let n_max = *grid.last().expect("non-empty");
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let mut state = kind.initial_state();
            let mut out = Vec::with_capacity(grid.len());
            let mut next = 0;
            if grid[0] == 0 {
                out.push((kind.estimate_raw(&state) - mu_star).powi(2));
                next = 1;
            }
            for i in 1..=n_max {
                state.update(source.statistic(source.draw(&mut rng)));
                if next < grid.len() && grid[next] == i {
                    out.push((kind.estimate_raw(&state) - mu_star).powi(2));
                    next += 1;
                }
            }
            out
        })
        .collect();
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let (mean, se) = mean_and_stderr(per_rep.iter().map(|r| r[g]), reps);
            DeviationStats {
                n,
                mean_sq_dev: mean,
                std_error: se,
                scaled: n as f64 * mean,
            }
        })
        .collect())
}

pub fn deviation_stats(
    kind: &EstimatorKind,
    source: &Source,
    n: u64,
    reps: usize,
    seed: u64,
) -> Result<DeviationStats, EstimatorError> {
    Ok(deviation_profile(kind, source, &[n], reps, seed)?[0])
}

/// Sample mean and standard error, summed in iteration order.
pub(crate) fn mean_and_stderr(
    values: impl Iterator<Item = f64> + Clone,
    count: usize,
) -> (f64, f64) {
    let n = count as f64;
    let mean = values.clone().sum::<f64>() / n;
    if count < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::Source;

    fn run(x0: f64, n0: f64, xs: &[f64]) -> f64 {
        let mut s = SmoothedMlState::new(x0, n0).unwrap();
        for &x in xs {
            s.update(x);
        }
        s.estimate()
    }

    #[test]
    fn update_examples() {
        assert_eq!(run(1.0, 1.0, &[]), 1.0);
        assert_eq!(run(1.0, 1.0, &[3.0]), 2.0);
        assert!((run(0.5, 2.0, &[1.0; 4]) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_examples() {
        let pois = FamilyModel::poisson();
        let mut state = SmoothedMlState::new(1.0, 1.0).unwrap();
        state.update(5.0); // smoothed ML = 3
        let c = EstimatorKind::ConstantAt { mu: 2.5 };
        assert_eq!(c.estimate(&pois, &state).mean.value(), 2.5);
        let clamp = EstimatorKind::ClampedMl {
            x0: 1.0,
            n0: 1.0,
            lo: 1.0,
            hi: 2.0,
        };
        assert_eq!(clamp.estimate(&pois, &state).mean.value(), 2.0);

        let nv = FamilyModel::normal_fixed_variance(1.0).unwrap();
        let mut state = SmoothedMlState::new(0.0, 1.0).unwrap();
        state.update(4.0); // smoothed ML = 2
        let shrink = EstimatorKind::ShrunkenMl {
            x0: 0.0,
            n0: 1.0,
            shrink: 0.5,
        };
        assert_eq!(shrink.estimate(&nv, &state).mean.value(), 1.0);
    }

    #[test]
    fn estimate_clamps_off_boundary_and_flags() {
        let pois = FamilyModel::poisson();
        let kind = EstimatorKind::SmoothedMl { x0: 0.0, n0: 1.0 };
        let state = kind.initial_state();
        let est = kind.estimate(&pois, &state);
        assert!(est.boundary_clamped);
        assert!(est.mean.value() > 0.0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        let pois = FamilyModel::poisson();
        let k = EstimatorKind::parse_for("smoothed_ml", &pois).unwrap();
        assert_eq!(k, EstimatorKind::SmoothedMl { x0: 1.0, n0: 1.0 });
        for text in [
            "smoothed_ml(x0=1,n0=10)",
            "clamped_ml(x0=1,n0=1,lo=1.5,hi=6)",
            "constant(mu=3)",
            "shrunken_ml(x0=1,n0=1,shrink=0.9)",
        ] {
            let k: EstimatorKind = text.parse().unwrap();
            assert_eq!(k.to_string(), text);
        }
        assert!("shrunken_ml(shrink=1.5)".parse::<EstimatorKind>().is_err());
        assert!("clamped_ml(lo=2,hi=1)".parse::<EstimatorKind>().is_err());
        assert!("smoothed_ml(n0=0)".parse::<EstimatorKind>().is_err());
        assert!("smoothed_ml(foo=1)".parse::<EstimatorKind>().is_err());
        assert!("median".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn deviation_constant_is_zero() {
        let src = Source::in_model(FamilyModel::poisson(), 3.0).unwrap();
        let k = EstimatorKind::ConstantAt { mu: 3.0 };
        let d = deviation_profile(&k, &src, &[1, 10, 100], 100, 1).unwrap();
        assert!(d.iter().all(|s| s.mean_sq_dev == 0.0));
    }

    #[test]
    fn deviation_requires_reps() {
        let src = Source::in_model(FamilyModel::poisson(), 3.0).unwrap();
        let k = EstimatorKind::SmoothedMl { x0: 1.0, n0: 1.0 };
        assert!(matches!(
            deviation_stats(&k, &src, 10, 50, 1),
            Err(EstimatorError::TooFewReplications { .. })
        ));
    }
}
