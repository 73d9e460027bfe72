//! Prequential plug-in codes over one-parameter exponential families and a
//! Monte Carlo harness for measuring their relative redundancy.

pub mod checks;
pub mod estimators;
pub mod expfam;
pub mod lab;
pub mod numeric;
pub mod params;
pub mod predictors;
pub mod rng;
pub mod sources;

pub use estimators::{EstimatorKind, SmoothedMlState};
pub use expfam::{FamilyKind, FamilyModel, MeanParam};
pub use lab::{RedundancyCurve, RedundancyPath, SlopeFit};
pub use predictors::{PredictiveRule, RuleKind};
pub use sources::{Scenario, Source};
