//! Data-generating distributions and the built-in scenario registry.
//!
//! A [`Source`] is an i.i.d. distribution P over outcomes, typically outside
//! the model family it is paired with. Its metadata (mean, variance and
//! central moments of the sufficient statistic) is set analytically per kind.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use thiserror::Error;

use crate::expfam::{
    central_from_raw, gamma_raw_moments, negbin_raw_moments, poisson_draw, ExpFamError, FamilyKind,
    FamilyModel, GrowthProfile, MeanParam, StatRange, TailGrowth,
};

/// Highest central moment order carried in source metadata.
pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("invalid source parameter: {0}")]
    InvalidParameter(String),
    #[error("source {source_desc} cannot be paired with model {model}: {reason}")]
    IncompatiblePairing {
        source_desc: String,
        model: String,
        reason: String,
    },
    #[error("model {0} carries no growth metadata")]
    MissingGrowthMetadata(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    ExpFam(#[from] ExpFamError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    /// P is itself a member of a family.
    InModel {
        model: FamilyModel,
        mean: MeanParam,
    },
    /// Two-point distribution on {a, b} with the given mean.
    ScaledBernoulli {
        a: f64,
        b: f64,
        mean: f64,
    },
    WideNormal {
        mean: f64,
        variance: f64,
    },
    /// Gamma-mixed Poisson with dispersion `r`; variance mean + mean²/r.
    NegativeBinomial {
        r: f64,
        mean: f64,
    },
    GammaSource {
        shape: f64,
        mean: f64,
    },
}

/// What values a source's outcomes can take, for pairing checks.
#[derive(Debug, Clone, PartialEq)]
enum OutcomeSupport {
    Points(Vec<f64>),
    Counts,
    PositiveReals,
    Reals,
    Family(FamilyKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    kind: SourceKind,
    mean: f64,
    variance: f64,
    central_moments: Vec<f64>,
    /// `None` when every moment is finite.
    moments_exist_up_to: Option<u32>,
}

impl Source {
    fn from_kind(kind: SourceKind) -> Self {
        let (mean, central_moments) = match kind {
            SourceKind::InModel { model, mean } => {
                let raw = model.raw_moments(&mean, MAX_MOMENT_ORDER);
                (mean.value(), central_from_raw(&raw))
            }
            SourceKind::ScaledBernoulli { a, b, mean } => {
                let p = (mean - a) / (b - a);
                let c = (0..=MAX_MOMENT_ORDER)
                    .map(|k| p * (b - mean).powi(k as i32) + (1.0 - p) * (a - mean).powi(k as i32))
                    .collect();
                (mean, c)
            }
            SourceKind::WideNormal { mean, variance } => {
                let mut c = vec![0.0; MAX_MOMENT_ORDER + 1];
                c[0] = 1.0;
                let mut acc = 1.0;
                for k in (2..=MAX_MOMENT_ORDER).step_by(2) {
                    acc *= (k - 1) as f64 * variance;
                    c[k] = acc;
                }
                (mean, c)
            }
            SourceKind::NegativeBinomial { r, mean } => (
                mean,
                central_from_raw(&negbin_raw_moments(r, mean, MAX_MOMENT_ORDER)),
            ),
            SourceKind::GammaSource { shape, mean } => (
                mean,
                central_from_raw(&gamma_raw_moments(shape, mean / shape, MAX_MOMENT_ORDER)),
            ),
        };
        // Closed forms for the variance avoid raw-moment cancellation.
        let variance = match kind {
            SourceKind::InModel { model, mean } => model.variance(&mean),
            SourceKind::ScaledBernoulli { a, b, mean } => (b - mean) * (mean - a),
            SourceKind::WideNormal { variance, .. } => variance,
            SourceKind::NegativeBinomial { r, mean } => mean + mean * mean / r,
            SourceKind::GammaSource { shape, mean } => mean * mean / shape,
        };
        let mut central_moments = central_moments;
        central_moments[1] = 0.0;
        central_moments[2] = variance;
        Self {
            kind,
            mean,
            variance,
            central_moments,
            moments_exist_up_to: None,
        }
    }

    pub fn in_model(model: FamilyModel, mean: f64) -> Result<Self, SourceError> {
        let mean = model.param(mean)?;
        Ok(Self::from_kind(SourceKind::InModel { model, mean }))
    }

    pub fn scaled_bernoulli(a: f64, b: f64, mean: f64) -> Result<Self, SourceError> {
        if !(a.is_finite() && b.is_finite() && a < mean && mean < b) {
            return Err(SourceError::InvalidParameter(format!(
                "scaled Bernoulli needs a < mean < b, got a={a}, b={b}, mean={mean}"
            )));
        }
        Ok(Self::from_kind(SourceKind::ScaledBernoulli { a, b, mean }))
    }

    pub fn wide_normal(mean: f64, variance: f64) -> Result<Self, SourceError> {
        if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
            return Err(SourceError::InvalidParameter(format!(
                "normal source needs finite mean and positive variance, got {mean}, {variance}"
            )));
        }
        Ok(Self::from_kind(SourceKind::WideNormal { mean, variance }))
    }

    pub fn negative_binomial(r: f64, mean: f64) -> Result<Self, SourceError> {
        if !(r.is_finite() && r > 0.0 && mean.is_finite() && mean > 0.0) {
            return Err(SourceError::InvalidParameter(format!(
                "negative binomial needs r > 0 and mean > 0, got r={r}, mean={mean}"
            )));
        }
        Ok(Self::from_kind(SourceKind::NegativeBinomial { r, mean }))
    }

    pub fn gamma(shape: f64, mean: f64) -> Result<Self, SourceError> {
        if !(shape.is_finite() && shape > 0.0 && mean.is_finite() && mean > 0.0) {
            return Err(SourceError::InvalidParameter(format!(
                "gamma source needs shape > 0 and mean > 0, got shape={shape}, mean={mean}"
            )));
        }
        Ok(Self::from_kind(SourceKind::GammaSource { shape, mean }))
    }

    /// Declares that only the first `k` moments are finite.
    pub fn with_moment_limit(mut self, k: u32) -> Self {
        self.moments_exist_up_to = Some(k);
        self
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    /// E_P[X]; equals μ* for any model whose mean space contains it.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn moments_exist_up_to(&self) -> Option<u32> {
        self.moments_exist_up_to
    }

    pub fn moment_exists(&self, k: u32) -> bool {
        self.moments_exist_up_to.is_none_or(|limit| k <= limit)
    }

    /// E_P[(X - μ*)^k] for k ≤ 8, if declared finite.
    pub fn central_moment(&self, k: usize) -> Option<f64> {
        if k > MAX_MOMENT_ORDER || !self.moment_exists(k as u32) {
            return None;
        }
        Some(self.central_moments[k])
    }

    /// Sufficient statistic applied to this source's outcomes.
    pub fn statistic(&self, z: f64) -> f64 {
        match self.kind {
            SourceKind::InModel { model, .. } => model.statistic(z),
            _ => z,
        }
    }

    pub fn stat_range(&self) -> StatRange {
        match self.kind {
            SourceKind::InModel { model, .. } => model.stat_range(),
            SourceKind::ScaledBernoulli { a, b, .. } => StatRange {
                lo: Some(a),
                hi: Some(b),
            },
            SourceKind::WideNormal { .. } => StatRange { lo: None, hi: None },
            SourceKind::NegativeBinomial { .. } | SourceKind::GammaSource { .. } => StatRange {
                lo: Some(0.0),
                hi: None,
            },
        }
    }

    fn support(&self) -> OutcomeSupport {
        match self.kind {
            SourceKind::InModel { model, .. } => OutcomeSupport::Family(model.kind()),
            SourceKind::ScaledBernoulli { a, b, .. } => OutcomeSupport::Points(vec![a, b]),
            SourceKind::WideNormal { .. } => OutcomeSupport::Reals,
            SourceKind::NegativeBinomial { .. } => OutcomeSupport::Counts,
            SourceKind::GammaSource { .. } => OutcomeSupport::PositiveReals,
        }
    }

    /// Whether P is a member of `model`'s family.
    pub fn belongs_to(&self, model: &FamilyModel) -> bool {
        match self.kind {
            SourceKind::InModel { model: m, .. } => m == *model,
            SourceKind::ScaledBernoulli { a, b, .. } => {
                model.kind() == FamilyKind::Bernoulli && a == 0.0 && b == 1.0
            }
            SourceKind::WideNormal { variance, .. } => {
                model.kind() == FamilyKind::NormalFixedVariance && model.hyper() == Some(variance)
            }
            SourceKind::NegativeBinomial { .. } => false,
            SourceKind::GammaSource { shape, .. } => {
                model.kind() == FamilyKind::GammaFixedShape && model.hyper() == Some(shape)
            }
        }
    }

    /// One i.i.d. outcome z ∼ P.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            SourceKind::InModel { model, mean } => model.sample(&mean, rng),
            SourceKind::ScaledBernoulli { a, b, mean } => {
                let p = (mean - a) / (b - a);
                if rng.random::<f64>() < p {
                    b
                } else {
                    a
                }
            }
            SourceKind::WideNormal { mean, variance } => Normal::new(mean, variance.sqrt())
                .expect("positive variance")
                .sample(rng),
            SourceKind::NegativeBinomial { r, mean } => {
                let rate = Gamma::new(r, mean / r)
                    .expect("positive parameters")
                    .sample(rng);
                poisson_draw(rate, rng)
            }
            SourceKind::GammaSource { shape, mean } => Gamma::new(shape, mean / shape)
                .expect("positive parameters")
                .sample(rng),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SourceKind::InModel { model, mean } => write!(f, "{model}[mu={}]", mean.value()),
            SourceKind::ScaledBernoulli { a, b, mean } => {
                write!(f, "scaled_bernoulli(a={a},b={b},mean={mean})")
            }
            SourceKind::WideNormal { mean, variance } => {
                write!(f, "normal(mean={mean},variance={variance})")
            }
            SourceKind::NegativeBinomial { r, mean } => write!(f, "negbin(r={r},mean={mean})"),
            SourceKind::GammaSource { shape, mean } => {
                write!(f, "gamma(shape={shape},mean={mean})")
            }
        }?;
        if let Some(k) = self.moments_exist_up_to {
            write!(f, "{{moments<={k}}}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// A source paired with the model the codes are built on.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    label: String,
    source: Source,
    model: FamilyModel,
    mu_star: MeanParam,
}

impl Scenario {
    pub fn new(
        label: impl Into<String>,
        source: Source,
        model: FamilyModel,
    ) -> Result<Self, SourceError> {
        let incompatible = |reason: String| SourceError::IncompatiblePairing {
            source_desc: source.to_string(),
            model: model.to_string(),
            reason,
        };
        let mu_star = model
            .param(source.mean())
            .map_err(|e| incompatible(e.to_string()))?;
        let sufficient_matches = match source.kind {
            SourceKind::InModel { model: m, .. } => {
                (m.kind() == FamilyKind::NormalFixedMean)
                    == (model.kind() == FamilyKind::NormalFixedMean)
            }
            _ => model.kind() != FamilyKind::NormalFixedMean,
        };
        if !sufficient_matches {
            return Err(incompatible(
                "source and model use different sufficient statistics".into(),
            ));
        }
        if !domain_covers(&model, &source.support()) {
            return Err(incompatible(
                "source outcomes fall outside the model's outcome domain".into(),
            ));
        }
        let ratio = source.variance() / model.variance(&mu_star);
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(incompatible(format!(
                "variance ratio {ratio} is not finite and positive"
            )));
        }
        Ok(Self {
            label: label.into(),
            source,
            model,
            mu_star,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn model(&self) -> &FamilyModel {
        &self.model
    }

    /// μ* = E_P[X], the KL projection of P onto the model.
    pub fn mu_star(&self) -> MeanParam {
        self.mu_star
    }

    pub fn is_well_specified(&self) -> bool {
        self.source.belongs_to(&self.model)
    }

    /// var_P X / var_{M_{μ*}} X.
    pub fn variance_ratio(&self) -> f64 {
        self.source.variance() / self.model.variance(&self.mu_star)
    }
}

fn domain_covers(model: &FamilyModel, support: &OutcomeSupport) -> bool {
    use FamilyKind::*;
    match support {
        OutcomeSupport::Points(points) => points.iter().all(|&z| model.in_domain(z)),
        OutcomeSupport::Counts => matches!(model.kind(), Poisson | NormalFixedVariance),
        OutcomeSupport::PositiveReals => {
            matches!(model.kind(), GammaFixedShape | NormalFixedVariance)
        }
        OutcomeSupport::Reals => model.kind() == NormalFixedVariance,
        OutcomeSupport::Family(kind) => match (kind, model.kind()) {
            (a, b) if *a == b => true,
            (_, NormalFixedVariance) => true,
            (Bernoulli, Poisson) => true,
            (Geometric, Poisson) => true,
            _ => false,
        },
    }
}

fn build(label: &str, source: Result<Source, SourceError>, model: FamilyModel) -> Scenario {
    Scenario::new(
        label,
        source.expect("registry source parameters are valid"),
        model,
    )
    .expect("registry pairings are valid")
}

/// Built-in scenarios: misspecified pairs for every over-dispersed
/// construction plus well-specified controls.
pub fn registry() -> Vec<Scenario> {
    let normvar1 = FamilyModel::normal_fixed_variance(1.0).expect("valid");
    let gamma2 = FamilyModel::gamma(2.0).expect("valid");
    let poisson = FamilyModel::poisson();
    vec![
        build(
            "negbin0.5_vs_poisson",
            Source::negative_binomial(0.5, 3.0),
            poisson,
        ),
        build(
            "negbin1_vs_poisson",
            Source::negative_binomial(1.0, 3.0),
            poisson,
        ),
        build(
            "negbin2_vs_poisson",
            Source::negative_binomial(2.0, 3.0),
            poisson,
        ),
        build(
            "scaledbern1_10_vs_geometric",
            Source::scaled_bernoulli(1.0, 10.0, 3.0),
            FamilyModel::geometric(),
        ),
        build(
            "widenormal2_vs_normvar1",
            Source::wide_normal(0.0, 2.0),
            normvar1,
        ),
        build(
            "widenormal4_vs_normvar1",
            Source::wide_normal(0.0, 4.0),
            normvar1,
        ),
        build(
            "widenormal9_vs_normvar1",
            Source::wide_normal(0.0, 9.0),
            normvar1,
        ),
        build("gamma0.5_vs_gammak2", Source::gamma(0.5, 2.0), gamma2),
        build(
            "poisson_wellspec_mu3",
            Source::in_model(poisson, 3.0),
            poisson,
        ),
        build(
            "bernoulli_wellspec_mu0.3",
            Source::in_model(FamilyModel::bernoulli(), 0.3),
            FamilyModel::bernoulli(),
        ),
        build(
            "scaledbern0_1_vs_bernoulli",
            Source::scaled_bernoulli(0.0, 1.0, 0.3),
            FamilyModel::bernoulli(),
        ),
        build(
            "geometric_wellspec_mu3",
            Source::in_model(FamilyModel::geometric(), 3.0),
            FamilyModel::geometric(),
        ),
        build(
            "gammak2_wellspec_mu2",
            Source::in_model(gamma2, 2.0),
            gamma2,
        ),
        build(
            "normvar1_wellspec_mu0",
            Source::in_model(normvar1, 0.0),
            normvar1,
        ),
        build(
            "normmean_wellspec_mu2",
            Source::in_model(FamilyModel::normal_fixed_mean(), 2.0),
            FamilyModel::normal_fixed_mean(),
        ),
    ]
}

pub fn scenario(label: &str) -> Result<Scenario, SourceError> {
    registry()
        .into_iter()
        .find(|s| s.label() == label)
        .ok_or_else(|| SourceError::UnknownScenario(label.to_string()))
}

// ---------------------------------------------------------------------------
// Moment/growth condition for the squashed ML code
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Condition2Report {
    pub satisfied: bool,
    /// Smallest even k ≥ 4 that works for every unbounded direction;
    /// `None` when X is bounded on both sides or the check fails.
    pub witness_k: Option<u32>,
    pub notes: Vec<String>,
}

const MAX_WITNESS_K: u32 = 64;

/// Evaluates the moment/growth condition for T := X and T := -X using the
/// model's declared growth metadata.
pub fn check_condition2(s: &Scenario) -> Result<Condition2Report, SourceError> {
    check_condition2_with_profile(s, s.model().growth_profile().as_ref())
}

pub fn check_condition2_with_profile(
    s: &Scenario,
    profile: Option<&GrowthProfile>,
) -> Result<Condition2Report, SourceError> {
    let profile =
        profile.ok_or_else(|| SourceError::MissingGrowthMetadata(s.model().to_string()))?;
    let range = s.source().stat_range();
    let mut notes = Vec::new();
    let mut witness: Option<u32> = None;
    let mut satisfied = true;
    let directions = [
        ("T=X", range.hi, profile.upper),
        ("T=-X", range.lo, profile.lower),
    ];
    for (name, bound, tail) in directions {
        match (bound, tail) {
            (
                Some(g),
                TailGrowth::Bounded {
                    polynomial_in_inverse_gap,
                },
            ) => {
                if polynomial_in_inverse_gap {
                    notes.push(format!(
                        "{name}: bounded by {g}; I, d2I, d4D polynomial in 1/(g-mu)"
                    ));
                } else {
                    satisfied = false;
                    notes.push(format!(
                        "{name}: bounded by {g} but growth is not polynomial in 1/(g-mu)"
                    ));
                }
            }
            (Some(g), TailGrowth::Unbounded { .. }) => {
                notes.push(format!(
                    "{name}: bounded by {g}; model functions are smooth at g"
                ));
            }
            (None, TailGrowth::Bounded { .. }) => {
                satisfied = false;
                notes.push(format!(
                    "{name}: unbounded under P but the model mean space is bounded"
                ));
            }
            (
                None,
                TailGrowth::Unbounded {
                    fisher,
                    fisher_constant,
                    fisher_d2,
                    kl_d4,
                },
            ) => {
                let fits = |k: i32| {
                    let within = |order: Option<i32>, limit: i32| order.is_none_or(|o| o <= limit);
                    within(fisher_d2, k - 4)
                        && within(kl_d4, k - 6)
                        && (fisher_constant || within(fisher, k / 2 - 3))
                };
                let found = (4..=MAX_WITNESS_K)
                    .step_by(2)
                    .find(|&k| s.source().moment_exists(k) && fits(k as i32));
                match found {
                    Some(k) => {
                        notes.push(format!(
                            "{name}: unbounded; k={k} moments exist and growth orders fit"
                        ));
                        witness = Some(witness.map_or(k, |w| w.max(k)));
                    }
                    None => {
                        satisfied = false;
                        notes.push(format!(
                            "{name}: unbounded; no even k>=4 with finite moments and matching growth orders"
                        ));
                    }
                }
            }
        }
    }
    Ok(Condition2Report {
        satisfied,
        witness_k: if satisfied { witness } else { None },
        notes,
    })
}
