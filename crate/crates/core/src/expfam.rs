//! One-parameter exponential families in the mean-value parameterization.
//!
//! Every family exposes closed forms for its density, the variance of the
//! sufficient statistic, Fisher information, KL divergence between members,
//! and the two derivatives that the moment/growth conditions on the squashed
//! ML code are phrased in. Outcomes are plain `f64` values; count families
//! expect integral values.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Geometric, Normal, Poisson};
use thiserror::Error;

use crate::numeric::{
    integrate, integrate_real_line, integrate_upper_tail, sum_series, QuadratureError,
};
use crate::params::ParamList;

/// Distance from an endpoint of the mean space inside which a parameter is
/// rejected.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpFamError {
    #[error("mean parameter {value} is outside the open mean space {space} of {family}")]
    OutsideMeanSpace {
        family: String,
        value: f64,
        space: MeanSpace,
    },
    #[error("outcome {z} is outside the outcome domain of {family}")]
    OutsideDomain { family: String, z: f64 },
    #[error("invalid hyperparameter for {family}: {reason}")]
    InvalidHyper {
        family: &'static str,
        reason: String,
    },
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Bernoulli,
    Poisson,
    /// Number of trials up to and including the first success, support `{1, 2, ...}`.
    Geometric,
    GammaFixedShape,
    NormalFixedVariance,
    /// Zero-mean normal indexed by its variance; the sufficient statistic is `z²`.
    NormalFixedMean,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::Bernoulli,
        FamilyKind::Poisson,
        FamilyKind::Geometric,
        FamilyKind::GammaFixedShape,
        FamilyKind::NormalFixedVariance,
        FamilyKind::NormalFixedMean,
    ];

    /// Stable name used in config files.
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Geometric => "geometric",
            FamilyKind::GammaFixedShape => "gamma_k",
            FamilyKind::NormalFixedVariance => "normal_var",
            FamilyKind::NormalFixedMean => "normal_mean",
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            FamilyKind::Bernoulli | FamilyKind::Poisson | FamilyKind::Geometric
        )
    }
}

/// Open interval `(lo, hi)` of admissible mean values; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSpace {
    pub lo: f64,
    pub hi: f64,
}

impl MeanSpace {
    pub fn contains(&self, value: f64) -> bool {
        value.is_finite()
            && value - self.lo > BOUNDARY_TOLERANCE
            && self.hi - value > BOUNDARY_TOLERANCE
    }

    /// Moves `value` strictly inside the space. Returns the moved value and
    /// whether a move was needed.
    pub fn clamp_inside(&self, value: f64) -> (f64, bool) {
        const MARGIN: f64 = 1e-9;
        if self.contains(value) {
            return (value, false);
        }
        if value.is_nan() {
            return (self.midpoint(), true);
        }
        if value - self.lo <= BOUNDARY_TOLERANCE {
            (self.lo + MARGIN.max(MARGIN * self.lo.abs()), true)
        } else {
            (self.hi - MARGIN.max(MARGIN * self.hi.abs()), true)
        }
    }

    fn midpoint(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi - 1.0,
            (false, false) => 0.0,
        }
    }
}

impl fmt::Display for MeanSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// A validated mean-value parameter. Build one through [`FamilyModel::param`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MeanParam(f64);

impl MeanParam {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Behaviour of I, d²I/dμ² and d⁴D/dμ⁴ towards one end of the mean space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailGrowth {
    /// Mean space unbounded on this side. Orders are the polynomial degrees
    /// as |μ| → ∞; `None` means the function vanishes identically.
    Unbounded {
        fisher: Option<i32>,
        fisher_constant: bool,
        fisher_d2: Option<i32>,
        kl_d4: Option<i32>,
    },
    /// Mean space ends at a finite point g on this side.
    Bounded { polynomial_in_inverse_gap: bool },
}

/// Declarative growth metadata (transcribed from the closed forms) used by
/// the moment-condition check for the squashed ML code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthProfile {
    pub upper: TailGrowth,
    pub lower: TailGrowth,
}

/// Closed interval bounds of the values the sufficient statistic can take.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatRange {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyModel {
    kind: FamilyKind,
    hyper: Option<f64>,
}

impl FamilyModel {
    pub fn bernoulli() -> Self {
        Self {
            kind: FamilyKind::Bernoulli,
            hyper: None,
        }
    }

    pub fn poisson() -> Self {
        Self {
            kind: FamilyKind::Poisson,
            hyper: None,
        }
    }

    pub fn geometric() -> Self {
        Self {
            kind: FamilyKind::Geometric,
            hyper: None,
        }
    }

    pub fn gamma(shape: f64) -> Result<Self, ExpFamError> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(ExpFamError::InvalidHyper {
                family: "gamma_k",
                reason: format!("shape must be positive and finite, got {shape}"),
            });
        }
        Ok(Self {
            kind: FamilyKind::GammaFixedShape,
            hyper: Some(shape),
        })
    }

    pub fn normal_fixed_variance(sigma2: f64) -> Result<Self, ExpFamError> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(ExpFamError::InvalidHyper {
                family: "normal_var",
                reason: format!("variance must be positive and finite, got {sigma2}"),
            });
        }
        Ok(Self {
            kind: FamilyKind::NormalFixedVariance,
            hyper: Some(sigma2),
        })
    }

    pub fn normal_fixed_mean() -> Self {
        Self {
            kind: FamilyKind::NormalFixedMean,
            hyper: None,
        }
    }

    /// Family with its default hyperparameter (shape 1, variance 1).
    pub fn with_defaults(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::Bernoulli => Self::bernoulli(),
            FamilyKind::Poisson => Self::poisson(),
            FamilyKind::Geometric => Self::geometric(),
            FamilyKind::GammaFixedShape => Self {
                kind,
                hyper: Some(1.0),
            },
            FamilyKind::NormalFixedVariance => Self {
                kind,
                hyper: Some(1.0),
            },
            FamilyKind::NormalFixedMean => Self::normal_fixed_mean(),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Shape for `gamma_k`, variance for `normal_var`.
    pub fn hyper(&self) -> Option<f64> {
        self.hyper
    }

    fn h(&self) -> f64 {
        self.hyper.expect("hyperparameter present for this family")
    }

    pub fn mean_space(&self) -> MeanSpace {
        let (lo, hi) = match self.kind {
            FamilyKind::Bernoulli => (0.0, 1.0),
            FamilyKind::Poisson | FamilyKind::GammaFixedShape | FamilyKind::NormalFixedMean => {
                (0.0, f64::INFINITY)
            }
            FamilyKind::Geometric => (1.0, f64::INFINITY),
            FamilyKind::NormalFixedVariance => (f64::NEG_INFINITY, f64::INFINITY),
        };
        MeanSpace { lo, hi }
    }

    pub fn param(&self, value: f64) -> Result<MeanParam, ExpFamError> {
        let space = self.mean_space();
        if space.contains(value) {
            Ok(MeanParam(value))
        } else {
            Err(ExpFamError::OutsideMeanSpace {
                family: self.to_string(),
                value,
                space,
            })
        }
    }

    /// Sufficient statistic X(z).
    pub fn statistic(&self, z: f64) -> f64 {
        match self.kind {
            FamilyKind::NormalFixedMean => z * z,
            _ => z,
        }
    }

    pub fn stat_range(&self) -> StatRange {
        match self.kind {
            FamilyKind::Bernoulli => StatRange {
                lo: Some(0.0),
                hi: Some(1.0),
            },
            FamilyKind::Poisson | FamilyKind::GammaFixedShape | FamilyKind::NormalFixedMean => {
                StatRange {
                    lo: Some(0.0),
                    hi: None,
                }
            }
            FamilyKind::Geometric => StatRange {
                lo: Some(1.0),
                hi: None,
            },
            FamilyKind::NormalFixedVariance => StatRange { lo: None, hi: None },
        }
    }

    pub fn in_domain(&self, z: f64) -> bool {
        if !z.is_finite() {
            return false;
        }
        match self.kind {
            FamilyKind::Bernoulli => z == 0.0 || z == 1.0,
            FamilyKind::Poisson => z >= 0.0 && z.fract() == 0.0,
            FamilyKind::Geometric => z >= 1.0 && z.fract() == 0.0,
            FamilyKind::GammaFixedShape => z > 0.0,
            FamilyKind::NormalFixedVariance | FamilyKind::NormalFixedMean => true,
        }
    }

    /// ln M_μ(z) in nats.
    pub fn log_density(&self, mu: &MeanParam, z: f64) -> Result<f64, ExpFamError> {
        if !self.in_domain(z) {
            return Err(ExpFamError::OutsideDomain {
                family: self.to_string(),
                z,
            });
        }
        let m = mu.0;
        Ok(match self.kind {
            FamilyKind::Bernoulli => {
                if z == 1.0 {
                    m.ln()
                } else {
                    (-m).ln_1p()
                }
            }
            FamilyKind::Poisson => {
                let base = -m - ln_factorial(z);
                if z == 0.0 {
                    base
                } else {
                    z * m.ln() + base
                }
            }
            FamilyKind::Geometric => {
                let failures = z - 1.0;
                let tail = if failures == 0.0 {
                    0.0
                } else {
                    failures * (m - 1.0).ln()
                };
                tail - z * m.ln()
            }
            FamilyKind::GammaFixedShape => {
                let k = self.h();
                k * (k / m).ln() + (k - 1.0) * z.ln() - k * z / m - libm::lgamma(k)
            }
            FamilyKind::NormalFixedVariance => {
                let s2 = self.h();
                let d = z - m;
                -0.5 * (2.0 * PI * s2).ln() - d * d / (2.0 * s2)
            }
            FamilyKind::NormalFixedMean => -0.5 * (2.0 * PI * m).ln() - z * z / (2.0 * m),
        })
    }

    /// var_{M_μ} X.
    pub fn variance(&self, mu: &MeanParam) -> f64 {
        let m = mu.0;
        match self.kind {
            FamilyKind::Bernoulli => m * (1.0 - m),
            FamilyKind::Poisson => m,
            FamilyKind::Geometric => m * (m - 1.0),
            FamilyKind::GammaFixedShape => m * m / self.h(),
            FamilyKind::NormalFixedVariance => self.h(),
            FamilyKind::NormalFixedMean => 2.0 * m * m,
        }
    }

    /// Fisher information in the mean-value parameterization, 1 / var_{M_μ} X.
    pub fn fisher_info(&self, mu: &MeanParam) -> f64 {
        let m = mu.0;
        match self.kind {
            FamilyKind::Bernoulli => 1.0 / (m * (1.0 - m)),
            FamilyKind::Poisson => 1.0 / m,
            FamilyKind::Geometric => 1.0 / (m * (m - 1.0)),
            FamilyKind::GammaFixedShape => self.h() / (m * m),
            FamilyKind::NormalFixedVariance => 1.0 / self.h(),
            FamilyKind::NormalFixedMean => 1.0 / (2.0 * m * m),
        }
    }

    /// d²I/dμ².
    pub fn fisher_second_derivative(&self, mu: &MeanParam) -> f64 {
        let m = mu.0;
        match self.kind {
            FamilyKind::Bernoulli => 2.0 / m.powi(3) + 2.0 / (1.0 - m).powi(3),
            FamilyKind::Poisson => 2.0 / m.powi(3),
            // I = 1/(μ-1) - 1/μ on support {1, 2, ...}.
            FamilyKind::Geometric => 2.0 / (m - 1.0).powi(3) - 2.0 / m.powi(3),
            FamilyKind::GammaFixedShape => 6.0 * self.h() / m.powi(4),
            FamilyKind::NormalFixedVariance => 0.0,
            FamilyKind::NormalFixedMean => 3.0 / m.powi(4),
        }
    }

    /// D(M_{μ*} ‖ M_μ) in nats.
    pub fn kl_divergence(&self, mu_star: &MeanParam, mu: &MeanParam) -> f64 {
        let (s, m) = (mu_star.0, mu.0);
        if s == m {
            return 0.0;
        }
        let d = match self.kind {
            FamilyKind::Bernoulli => xlogy_ratio(s, s, m) + xlogy_ratio(1.0 - s, 1.0 - s, 1.0 - m),
            FamilyKind::Poisson => xlogy_ratio(s, s, m) + m - s,
            FamilyKind::Geometric => xlogy_ratio(s - 1.0, s - 1.0, m - 1.0) - s * (s / m).ln(),
            FamilyKind::GammaFixedShape => self.h() * gamma_kl_core(s, m),
            FamilyKind::NormalFixedVariance => (s - m) * (s - m) / (2.0 * self.h()),
            FamilyKind::NormalFixedMean => 0.5 * gamma_kl_core(s, m),
        };
        // Cancellation can leave tiny negative values very close to μ* = μ.
        d.max(0.0)
    }

    /// d⁴/dμ⁴ D(M_{μ*} ‖ M_μ).
    pub fn kl_fourth_derivative(&self, mu_star: &MeanParam, mu: &MeanParam) -> f64 {
        let (s, m) = (mu_star.0, mu.0);
        match self.kind {
            FamilyKind::Bernoulli => 6.0 * s / m.powi(4) + 6.0 * (1.0 - s) / (1.0 - m).powi(4),
            FamilyKind::Poisson => 6.0 * s / m.powi(4),
            FamilyKind::Geometric => 6.0 * (s - 1.0) / (m - 1.0).powi(4) - 6.0 * s / m.powi(4),
            FamilyKind::GammaFixedShape => {
                let k = self.h();
                -6.0 * k / m.powi(4) + 24.0 * k * s / m.powi(5)
            }
            FamilyKind::NormalFixedVariance => 0.0,
            FamilyKind::NormalFixedMean => -3.0 / m.powi(4) + 12.0 * s / m.powi(5),
        }
    }

    /// One draw from M_μ.
    pub fn sample<R: Rng + ?Sized>(&self, mu: &MeanParam, rng: &mut R) -> f64 {
        let m = mu.0;
        match self.kind {
            FamilyKind::Bernoulli => {
                let d = Bernoulli::new(m).expect("mean inside (0, 1)");
                if d.sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::Poisson => poisson_draw(m, rng),
            FamilyKind::Geometric => {
                let d = Geometric::new(1.0 / m).expect("mean above 1");
                d.sample(rng) as f64 + 1.0
            }
            FamilyKind::GammaFixedShape => {
                let k = self.h();
                let d = Gamma::new(k, m / k).expect("positive shape and scale");
                d.sample(rng)
            }
            FamilyKind::NormalFixedVariance => {
                let d = Normal::new(m, self.h().sqrt()).expect("positive variance");
                d.sample(rng)
            }
            FamilyKind::NormalFixedMean => {
                let d = Normal::new(0.0, m.sqrt()).expect("positive variance");
                d.sample(rng)
            }
        }
    }

    /// Raw moments E[X^j], j = 0..=order, of the sufficient statistic under M_μ.
    pub fn raw_moments(&self, mu: &MeanParam, order: usize) -> Vec<f64> {
        let m = mu.0;
        match self.kind {
            FamilyKind::Bernoulli => {
                let mut v = vec![m; order + 1];
                v[0] = 1.0;
                v
            }
            FamilyKind::Poisson => poisson_raw_moments(m, order),
            FamilyKind::Geometric => {
                // X = 1 + Y with Y negative binomial (r = 1) of mean μ - 1.
                let y = negbin_raw_moments(1.0, m - 1.0, order);
                shift_raw_moments(&y, 1.0)
            }
            FamilyKind::GammaFixedShape => {
                let k = self.h();
                gamma_raw_moments(k, m / k, order)
            }
            FamilyKind::NormalFixedVariance => normal_raw_moments(m, self.h(), order),
            // Z² with Z ~ N(0, μ) is gamma with shape 1/2 and scale 2μ.
            FamilyKind::NormalFixedMean => gamma_raw_moments(0.5, 2.0 * m, order),
        }
    }

    /// E_{M_μ}[f(Z)] by series summation (discrete families) or adaptive
    /// quadrature over the outcome space (continuous families). `f` receives
    /// the raw outcome z.
    pub fn expect_numeric<F: Fn(f64) -> f64>(
        &self,
        mu: &MeanParam,
        f: F,
    ) -> Result<f64, QuadratureError> {
        const TAIL: f64 = 1e-14;
        const TOL: f64 = 1e-12;
        let m = mu.0;
        let weighted = |z: f64| {
            let lp = self
                .log_density(mu, z)
                .expect("integration stays inside the domain");
            let d = lp.exp();
            if d == 0.0 {
                0.0
            } else {
                d * f(z)
            }
        };
        match self.kind {
            FamilyKind::Bernoulli => Ok(weighted(0.0) + weighted(1.0)),
            FamilyKind::Poisson => self.sum_signed(mu, &f, 0, m, TAIL),
            FamilyKind::Geometric => self.sum_signed(mu, &f, 1, 1.0, TAIL),
            FamilyKind::GammaFixedShape => {
                // x = u² tames the x^(k-1) singularity at the origin.
                let head = integrate(
                    |u| {
                        if u == 0.0 {
                            0.0
                        } else {
                            2.0 * u * weighted(u * u)
                        }
                    },
                    0.0,
                    m.sqrt(),
                    TOL,
                )?;
                let tail = integrate_upper_tail(weighted, m, m, TOL)?;
                Ok(head + tail)
            }
            FamilyKind::NormalFixedVariance => {
                integrate_real_line(weighted, m, self.h().sqrt(), TOL)
            }
            FamilyKind::NormalFixedMean => integrate_real_line(weighted, 0.0, m.sqrt(), TOL),
        }
    }

    /// Series expectation for integrands that may change sign: the cutoff is
    /// found on the positive envelope `pmf·(1 + |f|)`, then the signed terms
    /// are summed up to it.
    fn sum_signed<F: Fn(f64) -> f64>(
        &self,
        mu: &MeanParam,
        f: &F,
        start: u64,
        mode: f64,
        tail: f64,
    ) -> Result<f64, QuadratureError> {
        let pmf = |k: u64| {
            self.log_density(mu, k as f64)
                .expect("inside the support")
                .exp()
        };
        let (_, last) = sum_series(|k| pmf(k) * (1.0 + f(k as f64).abs()), start, mode, tail)?;
        let mut sum = 0.0;
        let mut compensation = 0.0;
        for k in start..=last {
            let p = pmf(k);
            let y = if p == 0.0 { 0.0 } else { p * f(k as f64) } - compensation;
            let s = sum + y;
            compensation = (s - sum) - y;
            sum = s;
        }
        Ok(sum)
    }

    /// Reference point x0 for the smoothed ML estimator.
    pub fn default_prior_point(&self) -> f64 {
        match self.kind {
            FamilyKind::Bernoulli => 0.5,
            FamilyKind::Poisson | FamilyKind::GammaFixedShape | FamilyKind::NormalFixedMean => 1.0,
            FamilyKind::Geometric => 2.0,
            FamilyKind::NormalFixedVariance => 0.0,
        }
    }

    pub fn growth_profile(&self) -> Option<GrowthProfile> {
        let poly_pole = TailGrowth::Bounded {
            polynomial_in_inverse_gap: true,
        };
        let inverse_square = TailGrowth::Unbounded {
            fisher: Some(-2),
            fisher_constant: false,
            fisher_d2: Some(-4),
            kl_d4: Some(-4),
        };
        Some(match self.kind {
            FamilyKind::Bernoulli => GrowthProfile {
                upper: poly_pole,
                lower: poly_pole,
            },
            FamilyKind::Poisson => GrowthProfile {
                upper: TailGrowth::Unbounded {
                    fisher: Some(-1),
                    fisher_constant: false,
                    fisher_d2: Some(-3),
                    kl_d4: Some(-4),
                },
                lower: poly_pole,
            },
            FamilyKind::Geometric | FamilyKind::GammaFixedShape | FamilyKind::NormalFixedMean => {
                GrowthProfile {
                    upper: inverse_square,
                    lower: poly_pole,
                }
            }
            FamilyKind::NormalFixedVariance => {
                let flat = TailGrowth::Unbounded {
                    fisher: Some(0),
                    fisher_constant: true,
                    fisher_d2: None,
                    kl_d4: None,
                };
                GrowthProfile {
                    upper: flat,
                    lower: flat,
                }
            }
        })
    }
}

impl fmt::Display for FamilyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FamilyKind::GammaFixedShape => write!(f, "gamma_k(k={})", self.h()),
            FamilyKind::NormalFixedVariance => write!(f, "normal_var(sigma2={})", self.h()),
            kind => f.write_str(kind.name()),
        }
    }
}

impl FromStr for FamilyModel {
    type Err = ExpFamError;

    /// Accepts `poisson`, `gamma_k(k=2)`, `normal_var(sigma2=4)` and so on.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ExpFamError::UnknownFamily(s.to_string());
        let call = ParamList::parse(s).map_err(|_| unknown())?;
        let kind = FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == call.name)
            .ok_or_else(unknown)?;
        let hyper_key = match kind {
            FamilyKind::GammaFixedShape => Some("k"),
            FamilyKind::NormalFixedVariance => Some("sigma2"),
            _ => None,
        };
        for (key, _) in &call.args {
            if Some(key.as_str()) != hyper_key {
                return Err(unknown());
            }
        }
        let value = match hyper_key {
            Some(key) => call.number(key).map_err(|_| unknown())?,
            None => None,
        };
        match (kind, value) {
            (FamilyKind::GammaFixedShape, Some(k)) => FamilyModel::gamma(k),
            (FamilyKind::NormalFixedVariance, Some(v)) => FamilyModel::normal_fixed_variance(v),
            (kind, _) => Ok(FamilyModel::with_defaults(kind)),
        }
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// a · ln(b / c), with the 0 · ln 0 = 0 convention.
fn xlogy_ratio(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (b / c).ln()
    }
}

/// ln(μ/μ*) + μ*/μ - 1, evaluated stably near μ* = μ.
fn gamma_kl_core(s: f64, m: f64) -> f64 {
    let r = s / m;
    (r - 1.0) - r.ln()
}

const LN_FACTORIAL_TABLE: usize = 256;

fn ln_factorial(z: f64) -> f64 {
    static TABLE: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..LN_FACTORIAL_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    if z < LN_FACTORIAL_TABLE as f64 {
        table[z as usize]
    } else {
        libm::lgamma(z + 1.0)
    }
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda)
        .expect("positive finite rate")
        .sample(rng)
}

/// Stirling numbers of the second kind S(n, j) for n, j ≤ order.
fn stirling2(order: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; order + 1]; order + 1];
    s[0][0] = 1.0;
    for n in 1..=order {
        for j in 1..=n {
            s[n][j] = j as f64 * s[n - 1][j] + s[n - 1][j - 1];
        }
    }
    s
}

pub(crate) fn poisson_raw_moments(lambda: f64, order: usize) -> Vec<f64> {
    let s = stirling2(order);
    (0..=order)
        .map(|n| (0..=n).map(|j| s[n][j] * lambda.powi(j as i32)).sum())
        .collect()
}

/// Raw moments of a gamma-mixed Poisson with gamma shape `r` and mean `mean`.
pub(crate) fn negbin_raw_moments(r: f64, mean: f64, order: usize) -> Vec<f64> {
    let s = stirling2(order);
    let theta = mean / r;
    // E[λ^j] = θ^j r (r+1) ... (r+j-1)
    let mut lambda_moments = Vec::with_capacity(order + 1);
    let mut acc = 1.0;
    lambda_moments.push(1.0);
    for j in 1..=order {
        acc *= theta * (r + (j - 1) as f64);
        lambda_moments.push(acc);
    }
    (0..=order)
        .map(|n| (0..=n).map(|j| s[n][j] * lambda_moments[j]).sum())
        .collect()
}

pub(crate) fn gamma_raw_moments(shape: f64, scale: f64, order: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(order + 1);
    let mut acc = 1.0;
    v.push(1.0);
    for j in 1..=order {
        acc *= scale * (shape + (j - 1) as f64);
        v.push(acc);
    }
    v
}

pub(crate) fn normal_raw_moments(mean: f64, variance: f64, order: usize) -> Vec<f64> {
    let mut v = vec![1.0; order + 1];
    if order >= 1 {
        v[1] = mean;
    }
    for j in 2..=order {
        v[j] = mean * v[j - 1] + (j - 1) as f64 * variance * v[j - 2];
    }
    v
}

/// Raw moments of X + c from those of X.
pub(crate) fn shift_raw_moments(raw: &[f64], c: f64) -> Vec<f64> {
    (0..raw.len())
        .map(|n| {
            let mut binom = 1.0;
            let mut sum = 0.0;
            for (j, &r) in raw.iter().enumerate().take(n + 1) {
                sum += binom * r * c.powi((n - j) as i32);
                binom = binom * (n - j) as f64 / (j + 1) as f64;
            }
            sum
        })
        .collect()
}

/// Central moments from raw moments.
pub fn central_from_raw(raw: &[f64]) -> Vec<f64> {
    let mean = if raw.len() > 1 { raw[1] } else { 0.0 };
    shift_raw_moments(raw, -mean)
}
