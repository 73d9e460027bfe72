//! Command implementations behind the `preqcode` binary. Each command is a
//! plain function so tests can call it without spawning a process.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use preqcode::checks::{run_checks, CheckLevel, CheckReport};
use preqcode::estimators::EstimatorKind;
use preqcode::expfam::FamilyModel;
use preqcode::lab::{
    fit_slope, run_experiment, theorem1_probe, LabError, ProbeRow, RedundancyCurve, RedundancyPath,
    SlopeFit,
};
use preqcode::predictors::RuleKind;
use preqcode::sources::{check_condition2, registry, scenario, Scenario};
use thiserror::Error;

pub use config::{ExperimentConfig, PathChoice};

/// Environment variable consulted for the worker count when no flag is given.
pub const WORKERS_ENV: &str = "PREQCODE_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// Process exit code: 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Full-precision float formatting used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs `f` on a pool with the requested number of threads (all available
/// cores when `None`).
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()?;
    Ok(pool.install(f))
}

// ---------------------------------------------------------------------------
// families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRow {
    pub family: String,
    pub mu: f64,
    pub fisher_info: f64,
    pub fisher_d2: f64,
    /// Fourth μ-derivative of D(M_{μ*}‖M_μ) at μ* = μ.
    pub kl_d4: f64,
    pub variance: f64,
}

pub const FAMILY_HEADER: [&str; 6] = [
    "family",
    "mu",
    "fisher_info",
    "fisher_d2",
    "kl_d4",
    "variance",
];

pub fn cmd_families(family: &str, mu: f64) -> Result<FamilyRow, CliError> {
    let model: FamilyModel = family
        .parse()
        .map_err(|e: preqcode::expfam::ExpFamError| CliError::Config(e.to_string()))?;
    let m = model
        .param(mu)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(FamilyRow {
        family: model.to_string(),
        mu,
        fisher_info: model.fisher_info(&m),
        fisher_d2: model.fisher_second_derivative(&m),
        kl_d4: model.kl_fourth_derivative(&m, &m),
        variance: model.variance(&m),
    })
}

pub fn write_family_rows<W: Write>(rows: &[FamilyRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FAMILY_HEADER)?;
    for r in rows {
        w.write_record([
            r.family.clone(),
            fmt_f64(r.mu),
            fmt_f64(r.fisher_info),
            fmt_f64(r.fisher_d2),
            fmt_f64(r.kl_d4),
            fmt_f64(r.variance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// list-scenarios
// ---------------------------------------------------------------------------

pub fn write_scenario_list<W: Write>(out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "source",
        "model",
        "mu_star",
        "variance_ratio",
        "growth_witness_k",
    ])?;
    for s in registry() {
        let witness = match check_condition2(&s) {
            Ok(r) if r.satisfied => r.witness_k.map_or("bounded".to_string(), |k| k.to_string()),
            Ok(_) => "fails".to_string(),
            Err(_) => "unknown".to_string(),
        };
        w.write_record([
            s.label().to_string(),
            s.source().to_string(),
            s.model().to_string(),
            fmt_f64(s.mu_star().value()),
            fmt_f64(s.variance_ratio()),
            witness,
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub const CURVE_HEADER: [&str; 7] = [
    "scenario",
    "rule",
    "path",
    "n",
    "reps",
    "mean_nats",
    "stderr_nats",
];
pub const FITS_HEADER: [&str; 8] = [
    "scenario",
    "rule",
    "path",
    "coefficient",
    "halfwidth",
    "intercept",
    "burn_in_n",
    "residual_rms",
];

pub const DEFAULT_RULES: [&str; 2] = ["ml_plugin", "squashed_ml"];

#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub scenario: String,
    pub rule: String,
    pub path: RedundancyPath,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub curves: Vec<(PathBuf, RedundancyCurve)>,
    pub fits: Vec<FitRow>,
    pub fits_path: PathBuf,
    /// Messages about skipped paths or fits.
    pub notes: Vec<String>,
}

fn lookup_scenario(label: &str) -> Result<Scenario, CliError> {
    scenario(label).map_err(|e| CliError::Config(e.to_string()))
}

pub fn resolve_rules(cfg: &ExperimentConfig, s: &Scenario) -> Result<Vec<RuleKind>, CliError> {
    let texts: Vec<String> = if cfg.rules.is_empty() {
        DEFAULT_RULES.iter().map(|r| r.to_string()).collect()
    } else {
        cfg.rules.clone()
    };
    texts
        .iter()
        .map(|t| {
            let kind =
                RuleKind::parse_for(t, s.model()).map_err(|e| CliError::Config(e.to_string()))?;
            let kind = kind.with_prior(cfg.x0, cfg.n0);
            kind.validate_for(s.model())
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(kind)
        })
        .collect()
}

/// File-name-safe form of a rule string.
pub fn slug(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_curve(path: &Path, curve: &RedundancyCurve) -> Result<(), CliError> {
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(CURVE_HEADER).map_err(wrap)?;
    let rule = curve.rule.to_string();
    for p in &curve.points {
        w.write_record([
            curve.scenario_label.as_str(),
            rule.as_str(),
            curve.path.name(),
            &p.n.to_string(),
            &p.replications.to_string(),
            &fmt_f64(p.mean_nats),
            &fmt_f64(p.std_error),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_fits(path: &Path, fits: &[FitRow]) -> Result<(), CliError> {
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(FITS_HEADER).map_err(wrap)?;
    for r in fits {
        w.write_record([
            r.scenario.clone(),
            r.rule.clone(),
            r.path.name().to_string(),
            fmt_f64(r.fit.coefficient),
            fmt_f64(r.fit.confidence_halfwidth),
            fmt_f64(r.fit.intercept),
            r.fit.burn_in_n.to_string(),
            fmt_f64(r.fit.residual_rms),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs every configured rule on shared simulated data and writes one
/// curve CSV per (rule, path) plus `fits.csv` into `cfg.out`.
///
/// With `path = both`, the KL-sum path is only produced for in-model rules.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateOutput, CliError> {
    cfg.validate()?;
    let s = lookup_scenario(&cfg.scenario)?;
    let rules = resolve_rules(cfg, &s)?;
    let mut notes = Vec::new();
    let mut curves = Vec::new();
    with_workers(cfg.workers, || -> Result<(), CliError> {
        for (i, &rule) in rules.iter().enumerate() {
            let paths: Vec<RedundancyPath> = match cfg.path {
                PathChoice::Direct => vec![RedundancyPath::DirectCodelength],
                PathChoice::KlSum => vec![RedundancyPath::KlSum],
                PathChoice::Both if rule.is_in_model() => {
                    vec![RedundancyPath::DirectCodelength, RedundancyPath::KlSum]
                }
                PathChoice::Both => {
                    notes.push(format!(
                        "{rule}: KL-sum path skipped, the rule is not an in-model plug-in"
                    ));
                    vec![RedundancyPath::DirectCodelength]
                }
            };
            let result = run_experiment(&s, &[rule], &paths, &cfg.n_grid, cfg.reps, cfg.seed);
            for curve in result.map_err(|e| match e {
                LabError::UnsupportedPath { .. } => CliError::Config(e.to_string()),
                other => CliError::Lab(other),
            })? {
                curves.push((i, curve));
            }
        }
        Ok(())
    })??;

    create_dir(&cfg.out)?;
    let mut written = Vec::with_capacity(curves.len());
    let mut fits = Vec::new();
    for (i, curve) in curves {
        let file = cfg.out.join(format!(
            "curve_{:02}_{}_{}.csv",
            i,
            slug(&curve.rule.to_string()),
            curve.path.name()
        ));
        write_curve(&file, &curve)?;
        match fit_slope(&curve, cfg.burn_in) {
            Ok(fit) => fits.push(FitRow {
                scenario: curve.scenario_label.clone(),
                rule: curve.rule.to_string(),
                path: curve.path,
                fit,
            }),
            Err(e) => notes.push(format!(
                "{} ({}): no slope fit, {e}",
                curve.rule, curve.path
            )),
        }
        written.push((file, curve));
    }
    let fits_path = cfg.out.join("fits.csv");
    write_fits(&fits_path, &fits)?;
    Ok(SimulateOutput {
        curves: written,
        fits,
        fits_path,
        notes,
    })
}

// ---------------------------------------------------------------------------
// probe-theorem1
// ---------------------------------------------------------------------------

pub const PROBE_HEADER: [&str; 10] = [
    "scenario",
    "estimator",
    "coefficient",
    "halfwidth",
    "intercept",
    "burn_in_n",
    "residual_rms",
    "variance_ratio",
    "below_bound",
    "null_exception",
];

/// Smoothed ML with n0 = 1 and 10, clamped ML, shrunken ML (0.9) and the
/// constant estimator at μ*.
pub fn default_zoo(s: &Scenario) -> Vec<EstimatorKind> {
    let model = s.model();
    let x0 = model.default_prior_point();
    let mu = s.mu_star().value();
    let sd = model.variance(&s.mu_star()).sqrt();
    let space = model.mean_space();
    let lo = space.clamp_inside(mu - 0.5 * sd).0;
    let hi = space.clamp_inside(mu + 2.0 * sd).0;
    vec![
        EstimatorKind::SmoothedMl { x0, n0: 1.0 },
        EstimatorKind::SmoothedMl { x0, n0: 10.0 },
        EstimatorKind::ClampedMl {
            x0,
            n0: 1.0,
            lo,
            hi,
        },
        EstimatorKind::ShrunkenMl {
            x0,
            n0: 1.0,
            shrink: 0.9,
        },
        EstimatorKind::ConstantAt { mu },
    ]
}

#[derive(Debug, Clone)]
pub struct ProbeOutput {
    pub rows: Vec<ProbeRow>,
    pub path: PathBuf,
}

/// `cfg.rules` holds estimator strings here; empty means [`default_zoo`].
pub fn cmd_probe(cfg: &ExperimentConfig, margin: f64) -> Result<ProbeOutput, CliError> {
    cfg.validate()?;
    let s = lookup_scenario(&cfg.scenario)?;
    let zoo = if cfg.rules.is_empty() {
        default_zoo(&s)
    } else {
        cfg.rules
            .iter()
            .map(|t| {
                EstimatorKind::parse_for(t, s.model()).map_err(|e| CliError::Config(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let zoo: Vec<EstimatorKind> = zoo
        .into_iter()
        .map(|e| e.with_prior(cfg.x0, cfg.n0))
        .collect();
    let rows = with_workers(cfg.workers, || {
        theorem1_probe(
            &s,
            &zoo,
            &cfg.n_grid,
            cfg.reps,
            cfg.seed,
            cfg.burn_in,
            margin,
        )
    })??;
    create_dir(&cfg.out)?;
    let path = cfg.out.join("probe.csv");
    let wrap = |source| CliError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv_writer(&path)?;
    w.write_record(PROBE_HEADER).map_err(wrap)?;
    for r in &rows {
        w.write_record([
            s.label().to_string(),
            r.estimator.to_string(),
            fmt_f64(r.fit.coefficient),
            fmt_f64(r.fit.confidence_halfwidth),
            fmt_f64(r.fit.intercept),
            r.fit.burn_in_n.to_string(),
            fmt_f64(r.fit.residual_rms),
            fmt_f64(r.variance_ratio),
            r.below_bound.to_string(),
            r.null_exception.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(ProbeOutput { rows, path })
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

pub fn cmd_check(level: CheckLevel, workers: Option<usize>) -> Result<CheckReport, CliError> {
    with_workers(workers, || run_checks(level))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(
            slug("plugin(clamped_ml(x0=1,n0=1,lo=1.5,hi=6))"),
            "plugin_clamped_ml_x0_1_n0_1_lo_1.5_hi_6"
        );
        assert_eq!(slug("ml_plugin(x0=-1,n0=1)"), "ml_plugin_x0_-1_n0_1");
    }

    #[test]
    fn family_rows() {
        let r = cmd_families("poisson", 1.0).unwrap();
        assert_eq!((r.fisher_info, r.fisher_d2, r.kl_d4), (1.0, 2.0, 6.0));
        assert_eq!(cmd_families("bernoulli", 0.5).unwrap().fisher_info, 4.0);
        let r = cmd_families("normal_var(sigma2=1)", 0.3).unwrap();
        assert_eq!((r.fisher_info, r.fisher_d2, r.kl_d4), (1.0, 0.0, 0.0));
        assert!(matches!(
            cmd_families("cauchy", 1.0),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            cmd_families("bernoulli", 1.5),
            Err(CliError::Config(_))
        ));
    }
}
