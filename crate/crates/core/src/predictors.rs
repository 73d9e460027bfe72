//! Sequential predictive codes.
//!
//! A [`PredictiveRule`] assigns a conditional density to the next outcome
//! given the history it has observed; its negative log is the codelength
//! of that outcome in nats. Three kinds are supported:
//!
//! * plug-in codes, which predict with an in-model estimate `M_{μ̄_n}`;
//! * the squashed ML code, which reweights the ML plug-in density by
//!   `(1 + s_n I(μ̂_n)(x − μ̂_n)²) / (1 + s_n)` with `s_n = 1/(2n)`;
//! * the Bayesian code for the normal location family with a normal prior.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::estimators::{EstimatorKind, SmoothedMlState};
use crate::expfam::{ExpFamError, FamilyKind, FamilyModel, MeanParam};
use crate::numeric::QuadratureError;
use crate::params::ParamList;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Domain(#[from] ExpFamError),
    #[error("non-finite codelength for outcome {z} after {step} observations")]
    NonFinite { z: f64, step: u64 },
    #[error("invalid rule `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error("rule {rule} cannot be used with model {model}: {reason}")]
    Incompatible {
        rule: String,
        model: String,
        reason: String,
    },
    #[error("normalization check failed: {0}")]
    Quadrature(#[from] QuadratureError),
}

/// Which count the squash coefficient `s_n = 1/(2·count)` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SquashIndex {
    /// Number of real observations n; `s_0 = 0`.
    #[default]
    Observations,
    /// n + n0, counting the fake initial outcome.
    EffectiveCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleKind {
    Plugin(EstimatorKind),
    SquashedMl {
        x0: f64,
        n0: f64,
        index: SquashIndex,
    },
    /// Normal prior N(mu0, tau0sq) on the mean of a fixed-variance normal model.
    BayesNormalLocation {
        mu0: f64,
        tau0sq: f64,
    },
}

impl RuleKind {
    pub fn ml_plugin(model: &FamilyModel) -> Self {
        RuleKind::Plugin(EstimatorKind::smoothed(model))
    }

    pub fn squashed_ml(model: &FamilyModel) -> Self {
        RuleKind::SquashedMl {
            x0: model.default_prior_point(),
            n0: 1.0,
            index: SquashIndex::Observations,
        }
    }

    /// True for codes whose predictions stay inside the model family.
    pub fn is_in_model(&self) -> bool {
        matches!(self, RuleKind::Plugin(_))
    }

    pub fn with_prior(self, x0: Option<f64>, n0: Option<f64>) -> Self {
        match self {
            RuleKind::Plugin(e) => RuleKind::Plugin(e.with_prior(x0, n0)),
            RuleKind::SquashedMl {
                x0: a,
                n0: b,
                index,
            } => RuleKind::SquashedMl {
                x0: x0.unwrap_or(a),
                n0: n0.unwrap_or(b),
                index,
            },
            bayes => bayes,
        }
    }

    /// Parses a rule string for `model`:
    ///
    /// * `ml_plugin`, `ml_plugin(x0=..,n0=..)`
    /// * `squashed_ml`, `squashed_ml(x0=..,n0=..,index=obs|effective)`
    /// * `bayes_normal(mu0=..,tau0sq=..)`
    /// * `plugin(constant=..)`, `plugin(clamped=lo,hi)`, `plugin(shrunken=λ)`,
    ///   or `plugin(<estimator string>)`
    pub fn parse_for(text: &str, model: &FamilyModel) -> Result<Self, PredictError> {
        let err = |reason: String| PredictError::Parse {
            text: text.to_string(),
            reason,
        };
        let call = ParamList::parse(text).map_err(|e| err(e.to_string()))?;
        let num = |k: &str| call.number(k).map_err(|e| err(e.to_string()));
        let only = |allowed: &[&str]| match call
            .args
            .iter()
            .find(|(k, _)| !allowed.contains(&k.as_str()))
        {
            Some((k, _)) => Err(err(format!("unexpected argument `{k}`"))),
            None => Ok(()),
        };
        let x0 = num("x0")?.unwrap_or(model.default_prior_point());
        let n0 = num("n0")?.unwrap_or(1.0);
        let kind = match call.name.as_str() {
            "ml_plugin" => {
                only(&["x0", "n0"])?;
                RuleKind::Plugin(EstimatorKind::SmoothedMl { x0, n0 })
            }
            "squashed_ml" => {
                only(&["x0", "n0", "index"])?;
                let index = match call.get("index") {
                    None | Some("obs") => SquashIndex::Observations,
                    Some("effective") => SquashIndex::EffectiveCount,
                    Some(other) => return Err(err(format!("unknown squash index `{other}`"))),
                };
                RuleKind::SquashedMl { x0, n0, index }
            }
            "bayes_normal" => {
                only(&["mu0", "tau0sq"])?;
                RuleKind::BayesNormalLocation {
                    mu0: num("mu0")?.unwrap_or(0.0),
                    tau0sq: num("tau0sq")?.unwrap_or(1.0),
                }
            }
            "plugin" => {
                let [(key, value)] = call.args.as_slice() else {
                    return Err(err("plugin takes exactly one argument".into()));
                };
                let number = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| err(format!("`{v}` is not a number")))
                };
                let estimator = match key.as_str() {
                    "constant" => EstimatorKind::ConstantAt { mu: number(value)? },
                    "clamped" => {
                        let bounds: Vec<&str> = value.split(',').collect();
                        let [lo, hi] = bounds.as_slice() else {
                            return Err(err("clamped expects `lo,hi`".into()));
                        };
                        EstimatorKind::ClampedMl {
                            x0: model.default_prior_point(),
                            n0: 1.0,
                            lo: number(lo)?,
                            hi: number(hi)?,
                        }
                    }
                    "shrunken" => EstimatorKind::ShrunkenMl {
                        x0: model.default_prior_point(),
                        n0: 1.0,
                        shrink: number(value)?,
                    },
                    "" => EstimatorKind::parse_for(value, model).map_err(|e| err(e.to_string()))?,
                    other => return Err(err(format!("unknown plugin estimator `{other}`"))),
                };
                RuleKind::Plugin(estimator)
            }
            other => return Err(err(format!("unknown rule `{other}`"))),
        };
        kind.validate_for(model)?;
        Ok(kind)
    }

    pub fn validate_for(&self, model: &FamilyModel) -> Result<(), PredictError> {
        let incompatible = |reason: String| PredictError::Incompatible {
            rule: self.to_string(),
            model: model.to_string(),
            reason,
        };
        let space = model.mean_space();
        let inside = |what: &str, v: f64| {
            if space.contains(v) {
                Ok(())
            } else {
                Err(incompatible(format!(
                    "{what} = {v} lies outside the mean space {space}"
                )))
            }
        };
        match *self {
            RuleKind::Plugin(est) => {
                est.validate().map_err(|e| incompatible(e.to_string()))?;
                match est {
                    EstimatorKind::SmoothedMl { x0, .. } | EstimatorKind::ShrunkenMl { x0, .. } => {
                        inside("x0", x0)
                    }
                    EstimatorKind::ClampedMl { x0, lo, hi, .. } => {
                        inside("x0", x0)?;
                        inside("lo", lo)?;
                        inside("hi", hi)
                    }
                    EstimatorKind::ConstantAt { mu } => inside("constant", mu),
                }
            }
            RuleKind::SquashedMl { x0, n0, .. } => {
                SmoothedMlState::new(x0, n0).map_err(|e| incompatible(e.to_string()))?;
                inside("x0", x0)
            }
            RuleKind::BayesNormalLocation { mu0, tau0sq } => {
                if model.kind() != FamilyKind::NormalFixedVariance {
                    return Err(incompatible(
                        "the Bayes reference is only defined for normal_var".into(),
                    ));
                }
                if !(mu0.is_finite() && tau0sq.is_finite() && tau0sq > 0.0) {
                    return Err(incompatible(format!(
                        "need finite mu0 and tau0sq > 0, got {mu0}, {tau0sq}"
                    )));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RuleKind::Plugin(EstimatorKind::SmoothedMl { x0, n0 }) => {
                write!(f, "ml_plugin(x0={x0},n0={n0})")
            }
            RuleKind::Plugin(e) => write!(f, "plugin({e})"),
            RuleKind::SquashedMl { x0, n0, index } => {
                write!(f, "squashed_ml(x0={x0},n0={n0}")?;
                if index == SquashIndex::EffectiveCount {
                    f.write_str(",index=effective")?;
                }
                f.write_str(")")
            }
            RuleKind::BayesNormalLocation { mu0, tau0sq } => {
                write!(f, "bayes_normal(mu0={mu0},tau0sq={tau0sq})")
            }
        }
    }
}

/// Squash coefficient s_n for a history of `n` observations.
pub fn squash_coefficient(n: u64, n0: f64, index: SquashIndex) -> f64 {
    match index {
        SquashIndex::Observations if n == 0 => 0.0,
        SquashIndex::Observations => 1.0 / (2.0 * n as f64),
        SquashIndex::EffectiveCount => 1.0 / (2.0 * (n as f64 + n0)),
    }
}

/// ln of the squash weight `(1 + s·I(μ̂)(x − μ̂)²) / (1 + s)` at outcome z.
pub fn squash_log_weight(model: &FamilyModel, mu_hat: &MeanParam, s: f64, z: f64) -> f64 {
    let d = model.statistic(z) - mu_hat.value();
    (s * model.fisher_info(mu_hat) * d * d).ln_1p() - s.ln_1p()
}

/// Running predictive code over one model.
#[derive(Debug, Clone)]
pub struct PredictiveRule {
    kind: RuleKind,
    model: FamilyModel,
    state: SmoothedMlState,
    estimator: EstimatorKind,
    current: MeanParam,
    boundary_clamps: u64,
}

impl PredictiveRule {
    pub fn new(kind: RuleKind, model: FamilyModel) -> Result<Self, PredictError> {
        kind.validate_for(&model)?;
        let estimator = match kind {
            RuleKind::Plugin(e) => e,
            RuleKind::SquashedMl { x0, n0, .. } => EstimatorKind::SmoothedMl { x0, n0 },
            // Posterior mean = smoothed ML with x0 = μ0, n0 = σ²/τ0².
            RuleKind::BayesNormalLocation { mu0, tau0sq } => {
                let sigma2 = model.hyper().expect("normal_var carries its variance");
                EstimatorKind::SmoothedMl {
                    x0: mu0,
                    n0: sigma2 / tau0sq,
                }
            }
        };
        let state = estimator.initial_state();
        let first = estimator.estimate(&model, &state);
        Ok(Self {
            kind,
            model,
            state,
            estimator,
            current: first.mean,
            boundary_clamps: u64::from(first.boundary_clamped),
        })
    }

    pub fn kind(&self) -> &RuleKind {
        &self.kind
    }

    pub fn model(&self) -> &FamilyModel {
        &self.model
    }

    /// Number of outcomes observed so far.
    pub fn observed(&self) -> u64 {
        self.state.count()
    }

    /// Current in-model parameter (μ̄_n, μ̂_n, or the posterior mean μ_n).
    pub fn current_estimate(&self) -> MeanParam {
        self.current
    }

    /// How many estimates had to be moved off the mean-space boundary.
    pub fn boundary_clamps(&self) -> u64 {
        self.boundary_clamps
    }

    /// Posterior variance τ_n² of the Bayes reference.
    pub fn posterior_variance(&self) -> Option<f64> {
        match self.kind {
            RuleKind::BayesNormalLocation { .. } => {
                let sigma2 = self.model.hyper().expect("normal_var");
                Some(sigma2 / (self.state.count() as f64 + self.state.n0()))
            }
            _ => None,
        }
    }

    /// ln of the conditional density of `z` given the observed history.
    pub fn predict_log_density(&self, z: f64) -> Result<f64, PredictError> {
        let base = self.model.log_density(&self.current, z)?;
        let value = match self.kind {
            RuleKind::Plugin(_) => base,
            RuleKind::SquashedMl { n0, index, .. } => {
                let s = squash_coefficient(self.state.count(), n0, index);
                if s == 0.0 {
                    base
                } else {
                    base + squash_log_weight(&self.model, &self.current, s, z)
                }
            }
            RuleKind::BayesNormalLocation { .. } => {
                let sigma2 = self.model.hyper().expect("normal_var");
                let var = sigma2 + self.posterior_variance().expect("bayes");
                let d = z - self.current.value();
                -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(PredictError::NonFinite {
                z,
                step: self.state.count(),
            })
        }
    }

    pub fn observe(&mut self, z: f64) -> Result<(), PredictError> {
        if !self.model.in_domain(z) {
            return Err(ExpFamError::OutsideDomain {
                family: self.model.to_string(),
                z,
            }
            .into());
        }
        if let EstimatorKind::ConstantAt { .. } = self.estimator {
            return Ok(());
        }
        self.state.update(self.model.statistic(z));
        let est = self.estimator.estimate(&self.model, &self.state);
        self.current = est.mean;
        self.boundary_clamps += u64::from(est.boundary_clamped);
        Ok(())
    }
}

/// Total and (optionally) per-outcome codelengths in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct CodelengthLedger {
    pub total_nats: f64,
    pub per_step: Option<Vec<f64>>,
    pub steps: u64,
}

/// Codelength of `zs` under a fresh rule of the given kind.
pub fn code_sequence(
    kind: RuleKind,
    model: FamilyModel,
    zs: &[f64],
    retain_per_step: bool,
) -> Result<CodelengthLedger, PredictError> {
    let mut rule = PredictiveRule::new(kind, model)?;
    let mut total = 0.0;
    let mut per_step = retain_per_step.then(|| Vec::with_capacity(zs.len()));
    for &z in zs {
        let nats = -rule.predict_log_density(z)?;
        total += nats;
        if let Some(v) = per_step.as_mut() {
            v.push(nats);
        }
        rule.observe(z)?;
    }
    Ok(CodelengthLedger {
        total_nats: total,
        per_step,
        steps: zs.len() as u64,
    })
}

/// Total mass of the squashed density M'_{μ̂} for a history of length `n`,
/// by summation or quadrature. Equals 1 up to numerical error.
pub fn squash_normalization_check(
    model: &FamilyModel,
    mu_hat: &MeanParam,
    n: u64,
) -> Result<f64, PredictError> {
    let s = squash_coefficient(n, 1.0, SquashIndex::Observations);
    Ok(model.expect_numeric(mu_hat, |z| squash_log_weight(model, mu_hat, s, z).exp())?)
}

/// D(M'_{μ̂} ‖ M_{μ̂}) for a history of length `n`, numerically.
pub fn squash_divergence_from_model(
    model: &FamilyModel,
    mu_hat: &MeanParam,
    n: u64,
) -> Result<f64, PredictError> {
    let s = squash_coefficient(n, 1.0, SquashIndex::Observations);
    Ok(model.expect_numeric(mu_hat, |z| {
        let lw = squash_log_weight(model, mu_hat, s, z);
        lw.exp() * lw
    })?)
}
